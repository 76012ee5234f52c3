#include "coevo/parse.hpp"

#include <algorithm>
#include <cctype>

namespace coevo {
namespace {

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  }
  return true;
}

// Finds the next occurrence of `<token>` (case-insensitive) at or after pos.
std::size_t find_token(std::string_view raw, std::string_view token,
                       std::size_t pos) {
  if (token.size() > raw.size()) return std::string_view::npos;
  for (std::size_t i = pos; i + token.size() <= raw.size(); ++i) {
    if (iequals(raw.substr(i, token.size()), token)) return i;
  }
  return std::string_view::npos;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

}  // namespace

TagGrammar TagGrammar::questioner() {
  return TagGrammar{{"description", "question", "answer"}, true};
}

std::optional<std::string> extract_tag_block(std::string_view raw,
                                             std::string_view tag,
                                             bool one_block_each) {
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";

  const std::size_t first_open = find_token(raw, open, 0);
  if (first_open == std::string_view::npos) return std::nullopt;

  const std::size_t body_start = first_open + open.size();
  const std::size_t close_pos = find_token(raw, close, body_start);
  if (close_pos == std::string_view::npos) return std::nullopt;  // unclosed

  if (one_block_each) {
    // A second open tag anywhere (inside the block: nesting, after it:
    // repetition) rejects.
    if (find_token(raw, open, body_start) != std::string_view::npos)
      return std::nullopt;
  }
  return std::string(raw.substr(body_start, close_pos - body_start));
}

std::optional<McqQuestion> parse_mcq_text(std::string_view text) {
  // Scan for option markers: letter + one of `.`/`)`/`:` at the start of the
  // text or right after whitespace. Letters beyond D count as extra options
  // and reject the question.
  struct Marker {
    char letter;
    std::size_t pos;        // position of the letter
    std::size_t text_pos;   // position right after the punctuation
  };
  std::vector<Marker> markers;
  for (std::size_t i = 0; i + 1 < text.size(); ++i) {
    const char c = text[i];
    if (c < 'A' || c > 'H') continue;
    const char punct = text[i + 1];
    if (punct != '.' && punct != ')' && punct != ':') continue;
    if (i > 0 && !std::isspace(static_cast<unsigned char>(text[i - 1])))
      continue;
    markers.push_back({c, i, i + 2});
  }

  if (markers.size() != 4) return std::nullopt;
  McqQuestion q;
  bool seen[4] = {false, false, false, false};
  for (std::size_t k = 0; k < 4; ++k) {
    const auto label = label_from_char(markers[k].letter);
    if (!label) return std::nullopt;  // E..H marker: too many options
    const auto idx = static_cast<std::size_t>(*label);
    if (seen[idx]) return std::nullopt;  // duplicate label
    seen[idx] = true;
    const std::size_t end =
        (k + 1 < 4) ? markers[k + 1].pos : text.size();
    const auto body = trim(text.substr(markers[k].text_pos,
                                       end - markers[k].text_pos));
    if (body.empty()) return std::nullopt;
    q.option(*label) = std::string(body);
  }

  const auto stem = trim(text.substr(0, markers[0].pos));
  if (stem.empty()) return std::nullopt;
  q.stem = std::string(stem);
  return q;
}

QuestionerOutput parse_questioner(std::string_view raw) {
  QuestionerOutput out;
  out.raw_text = std::string(raw);

  if (auto desc = extract_tag_block(raw, "description", false))
    out.description = std::string(trim(*desc));

  if (auto qblock = extract_tag_block(raw, "question"))
    out.question = parse_mcq_text(*qblock);

  if (auto ablock = extract_tag_block(raw, "answer")) {
    const auto body = trim(*ablock);
    if (body.size() == 1) out.intuitive_answer = label_from_char(body[0]);
  }

  out.valid = out.question.has_value() && out.intuitive_answer.has_value();
  return out;
}

std::optional<OptionLabel> parse_solver(std::string_view raw) {
  // Drop <think> spans first; an unterminated think block swallows the rest.
  std::string visible;
  visible.reserve(raw.size());
  std::size_t pos = 0;
  while (pos < raw.size()) {
    const std::size_t open = find_token(raw, "<think>", pos);
    if (open == std::string_view::npos) {
      visible.append(raw.substr(pos));
      break;
    }
    visible.append(raw.substr(pos, open - pos));
    const std::size_t close = find_token(raw, "</think>", open + 7);
    if (close == std::string_view::npos) break;
    pos = close + 8;
  }

  // Last \boxed{...} span decides; models often restate their answer.
  constexpr std::string_view kBoxed = "\\boxed{";
  std::size_t last = std::string::npos;
  for (std::size_t i = visible.find(kBoxed); i != std::string::npos;
       i = visible.find(kBoxed, i + 1)) {
    last = i;
  }
  if (last == std::string::npos) return std::nullopt;

  const std::size_t body_start = last + kBoxed.size();
  const std::size_t end = visible.find('}', body_start);
  if (end == std::string::npos) return std::nullopt;

  const auto body = trim(std::string_view(visible).substr(body_start,
                                                          end - body_start));
  if (body.size() != 1) return std::nullopt;
  return label_from_char(body[0]);
}

std::set<OptionLabel> extract_option_labels(const McqQuestion& question) {
  (void)question;
  return {kAllLabels.begin(), kAllLabels.end()};
}

std::string render_mcq(const McqQuestion& question) {
  std::string text = question.stem;
  for (OptionLabel label : kAllLabels) {
    text += "\n";
    text += to_char(label);
    text += ". ";
    text += question.option(label);
  }
  return text;
}

std::string render_questioner_output(const std::string& description,
                                     const McqQuestion& question,
                                     OptionLabel intuitive_answer) {
  std::string out = "<description>\n" + description + "\n</description>\n\n";
  out += "<question>\n" + render_mcq(question) + "\n</question>\n\n";
  out += "<answer>\n";
  out += to_char(intuitive_answer);
  out += "\n</answer>";
  return out;
}

}  // namespace coevo
