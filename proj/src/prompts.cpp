#include "coevo/prompts.hpp"

#include "coevo/parse.hpp"

namespace coevo::prompts {

std::string solver_user(const McqQuestion& question) {
  return std::string(kSolverUserPrefix) + "\n\n" + render_mcq(question);
}

std::string judge_user(const McqQuestion& question) {
  return std::string(kJudgeUserPrefix) + "\n\n" + render_mcq(question);
}

}  // namespace coevo::prompts
