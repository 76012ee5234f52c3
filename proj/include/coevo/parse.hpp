#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "coevo/types.hpp"

namespace coevo {

// A strict tag grammar: which tags a generation must carry, each exactly once.
// Tags are matched case-insensitively; nested or repeated open tags reject.
struct TagGrammar {
  std::vector<std::string> required_tags;
  bool one_block_each = true;

  // Questioner output grammar: description + question + answer.
  static TagGrammar questioner();
};

// Extracts the content of a `<tag>...</tag>` block. Returns nullopt when the
// block is missing, unclosed, repeated, or nested (for one_block_each
// grammars). Stray close tags without a matching open are treated as text.
std::optional<std::string> extract_tag_block(std::string_view raw,
                                             std::string_view tag,
                                             bool one_block_each = true);

// Parses a bare MCQ body: a stem followed by four options marked `A.`/`A)`/
// `A:` at a line start or after whitespace. Any marker letter outside A-D,
// duplicate labels, a missing label, an empty stem or an empty option text
// all reject.
std::optional<McqQuestion> parse_mcq_text(std::string_view text);

// Parses a raw Questioner generation against the tag grammar. Never throws:
// malformed input yields valid=false with the offending fields absent. The
// description block is extracted when present but is not required for
// validity.
QuestionerOutput parse_questioner(std::string_view raw);

// Extracts the Solver's answer: the content of the last `\boxed{...}` span
// outside <think> blocks, when it is exactly one of A/B/C/D (surrounding
// whitespace tolerated). Anything else is an abstention.
std::optional<OptionLabel> parse_solver(std::string_view raw);

// The label set a question offers. Always {A,B,C,D} for a well-formed
// McqQuestion; voting consults this so it can reject votes for labels a
// future grammar might not carry.
std::set<OptionLabel> extract_option_labels(const McqQuestion& question);

// Canonical surface forms. The simulator and the round-trip tests render
// through these; parse_questioner(render_questioner_output(...)) recovers the
// fields exactly.
std::string render_mcq(const McqQuestion& question);
std::string render_questioner_output(const std::string& description,
                                     const McqQuestion& question,
                                     OptionLabel intuitive_answer);

}  // namespace coevo
