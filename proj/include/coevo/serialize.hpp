#pragma once

#include <json.hpp>

#include "coevo/types.hpp"

namespace coevo {

// JSON round-trip for the domain types persisted in run directories. All
// doubles go through nlohmann's shortest-round-trip formatting, so values
// read back bit-exact.

nlohmann::json to_json(const SceneRef& scene);
SceneRef scene_from_json(const nlohmann::json& j);

nlohmann::json to_json(const McqQuestion& question);
McqQuestion mcq_from_json(const nlohmann::json& j);

nlohmann::json to_json(const VoteResult& vote);
VoteResult vote_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainingSample& sample);
TrainingSample sample_from_json(const nlohmann::json& j);

nlohmann::json to_json(const GroupRollout& group);
GroupRollout group_from_json(const nlohmann::json& j);

nlohmann::json to_json(const LoopConfig& cfg);
LoopConfig loop_config_from_json(const nlohmann::json& j);

OptionLabel label_from_json(const nlohmann::json& j);

}  // namespace coevo
