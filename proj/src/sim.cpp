#include "coevo/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coevo/parse.hpp"
#include "coevo/prompts.hpp"

namespace coevo::sim {
namespace {

constexpr std::array<const char*, 5> kObjectPool = {"ball", "box", "cone",
                                                    "cube", "ring"};
constexpr std::array<const char*, 4> kChartCats = {"north", "south", "east",
                                                   "west"};

std::string fmt(double v) {
  const long long n = std::llround(v);
  return std::to_string(n);
}

double attr(const SimSceneSpec& s, const std::string& key) {
  const auto it = s.attributes.find(key);
  if (it == s.attributes.end())
    throw ContractViolation("scene attribute missing: " + key);
  return it->second;
}

std::uint64_t scene_hash(const SceneRef& scene) {
  const auto& s = scene.sim();
  std::string blob = scene.id + "|" + s.kind;
  for (const auto& sh : s.shapes) blob += "|" + sh;
  for (const auto& [k, v] : s.attributes) blob += "|" + k + "=" + fmt(v);
  return mix_seed(0x5eedULL, blob);
}

// Seeded Fisher-Yates.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.uniform_int(0, static_cast<int>(i) - 1)]);
}

struct PlacedOptions {
  std::array<std::string, 4> texts;
  OptionLabel correct;
  OptionLabel intuition;
};

// Places correct (and optionally a distinct intuitive value) among wrong
// texts at seeded labels.
PlacedOptions place_options(const std::string& correct,
                            const std::optional<std::string>& intuition,
                            std::vector<std::string> wrongs, Rng& rng) {
  std::vector<std::string> texts = {correct};
  if (intuition) texts.push_back(*intuition);
  shuffle(wrongs, rng);
  for (const auto& w : wrongs) {
    if (texts.size() == 4) break;
    texts.push_back(w);
  }
  if (texts.size() != 4)
    throw ContractViolation("place_options: not enough distinct options");

  std::vector<int> slots = {0, 1, 2, 3};
  shuffle(slots, rng);
  PlacedOptions out;
  for (std::size_t i = 0; i < 4; ++i)
    out.texts[static_cast<std::size_t>(slots[i])] = texts[i];
  out.correct = static_cast<OptionLabel>(slots[0]);
  out.intuition = intuition ? static_cast<OptionLabel>(slots[1]) : out.correct;
  return out;
}

// Three distinct non-negative numeric distractors around the correct value.
std::vector<std::string> numeric_distractors(long long correct, Rng& rng) {
  std::vector<long long> candidates;
  for (long long off : {-3, -2, -1, 1, 2, 3, 4, 5, 6}) {
    const long long v = correct + off;
    if (v >= 0 && v != correct) candidates.push_back(v);
  }
  shuffle(candidates, rng);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < 3 && i < candidates.size(); ++i)
    out.push_back(std::to_string(candidates[i]));
  return out;
}

PlacedOptions numeric_options(long long correct, Rng& rng) {
  return place_options(std::to_string(correct), std::nullopt,
                       numeric_distractors(correct, rng), rng);
}

PlacedOptions numeric_trap_options(long long correct, long long intuitive,
                                   Rng& rng) {
  auto wrongs = numeric_distractors(correct, rng);
  std::erase(wrongs, std::to_string(intuitive));
  return place_options(std::to_string(correct), std::to_string(intuitive),
                       wrongs, rng);
}

struct SpatialView {
  std::vector<std::string> names;  // placed objects, in order
  std::vector<int> xs, ys;
  std::string decoy;

  int man(std::size_t i, std::size_t j) const {
    return std::abs(xs[i] - xs[j]) + std::abs(ys[i] - ys[j]);
  }
  int cheb(std::size_t i, std::size_t j) const {
    return std::max(std::abs(xs[i] - xs[j]), std::abs(ys[i] - ys[j]));
  }
  std::string positions() const {
    std::string out;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (i) out += ", ";
      out += "the " + names[i] + " at (" + std::to_string(xs[i]) + ", " +
             std::to_string(ys[i]) + ")";
    }
    return out;
  }
};

SpatialView spatial_view(const SimSceneSpec& s) {
  SpatialView v;
  v.names = s.shapes;
  for (const auto& name : v.names) {
    v.xs.push_back(static_cast<int>(attr(s, name + "_x")));
    v.ys.push_back(static_cast<int>(attr(s, name + "_y")));
  }
  for (const char* name : kObjectPool)
    if (std::find(v.names.begin(), v.names.end(), name) == v.names.end())
      v.decoy = name;
  return v;
}

// Unique argmax/argmin helpers returning npos when tied.
template <typename F>
std::size_t unique_arg(std::size_t n, F value, bool want_max) {
  std::size_t best = 0;
  bool tied = false;
  for (std::size_t i = 1; i < n; ++i) {
    const auto a = value(i);
    const auto b = value(best);
    if (a == b) {
      tied = true;
    } else if ((a > b) == want_max) {
      best = i;
      tied = false;
    }
  }
  return tied ? static_cast<std::size_t>(-1) : best;
}

RenderedQuestion render_geometry(std::string_view tpl, const SimSceneSpec& s,
                                 Rng& rng) {
  const bool square = s.shapes.at(0) == "square";
  const long long k = std::llround(attr(s, "circles"));
  RenderedQuestion rq;
  PlacedOptions placed;

  if (tpl == "count") {
    const std::string shape = s.shapes.at(0);
    rq.question.stem = "If the figure shows one " + shape + " and " +
                       std::to_string(k) +
                       (k == 1 ? " circle" : " circles") +
                       ", how many closed shapes are drawn in total?";
    placed = numeric_options(k + 1, rng);
  } else if (square) {
    const long long side = std::llround(attr(s, "side"));
    if (tpl == "read") {
      rq.question.stem = "Given that the square has side length " +
                         std::to_string(side) +
                         ", what is the length of each side?";
      placed = numeric_options(side, rng);
    } else if (tpl == "measure") {
      rq.question.stem = "Given that the square has side length " +
                         std::to_string(side) + ", what is its perimeter?";
      placed = numeric_options(4 * side, rng);
    } else if (tpl == "combine") {
      rq.question.stem = "Given that the square has side length " +
                         std::to_string(side) + ", what is its area?";
      placed = numeric_options(side * side, rng);
    } else if (tpl == "chain") {
      rq.question.stem = "Given that the square has side length " +
                         std::to_string(side) +
                         ", what is its area plus its perimeter?";
      placed = numeric_options(side * side + 4 * side, rng);
    } else {  // pivot
      rq.question.stem =
          "If a rectangle has the same perimeter as this square (side length " +
          std::to_string(side) + ") and its width is " +
          std::to_string(side + 2) + ", what is the rectangle's area?";
      placed = numeric_trap_options(side * side - 4, side * side, rng);
    }
  } else {  // rectangle; width > height, width + height even
    const long long w = std::llround(attr(s, "width"));
    const long long h = std::llround(attr(s, "height"));
    const std::string given = "Given that the rectangle has width " +
                              std::to_string(w) + " and height " +
                              std::to_string(h);
    if (tpl == "read") {
      rq.question.stem = given + ", what is the length of its longer side?";
      placed = numeric_options(w, rng);
    } else if (tpl == "measure") {
      rq.question.stem = given + ", what is its perimeter?";
      placed = numeric_options(2 * (w + h), rng);
    } else if (tpl == "combine") {
      rq.question.stem = given + ", what is its area?";
      placed = numeric_options(w * h, rng);
    } else if (tpl == "chain") {
      rq.question.stem =
          given + ", what is the square of the length of its diagonal?";
      placed = numeric_options(w * w + h * h, rng);
    } else {  // pivot: equal-perimeter square beats the rectangle's area
      rq.question.stem =
          "If a square has the same perimeter as this rectangle (width " +
          std::to_string(w) + ", height " + std::to_string(h) +
          "), what is the area of that square?";
      const long long half = (w + h) / 2;
      placed = numeric_trap_options(half * half, w * h, rng);
    }
  }
  rq.question.options = placed.texts;
  rq.correct = placed.correct;
  rq.intuition = placed.intuition;
  return rq;
}

RenderedQuestion render_chart(std::string_view tpl, const SimSceneSpec& s,
                              Rng& rng) {
  std::array<long long, 4> v;
  for (std::size_t i = 0; i < 4; ++i)
    v[i] = std::llround(attr(s, kChartCats[i]));
  std::string given = "Given the chart values (";
  for (std::size_t i = 0; i < 4; ++i) {
    if (i) given += ", ";
    given += std::string(kChartCats[i]) + " " + std::to_string(v[i]);
  }
  given += ")";

  std::array<std::size_t, 4> order = {0, 1, 2, 3};  // ascending by value
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });

  RenderedQuestion rq;
  PlacedOptions placed;
  if (tpl == "count") {
    const long long t = std::llround(attr(s, "threshold"));
    rq.question.stem = given + ", how many categories show a value greater than " +
                       std::to_string(t) + "?";
    long long c = 0;
    for (long long x : v)
      if (x > t) ++c;
    placed = numeric_options(c, rng);
  } else if (tpl == "read") {
    const std::size_t cat = static_cast<std::size_t>(rng.uniform_int(0, 3));
    rq.question.stem =
        given + ", what is the value of " + kChartCats[cat] + "?";
    placed = numeric_options(v[cat], rng);
  } else if (tpl == "measure") {
    rq.question.stem =
        given + ", by how much does the largest value exceed the smallest?";
    placed = numeric_options(v[order[3]] - v[order[0]], rng);
  } else if (tpl == "combine") {
    const std::size_t a = static_cast<std::size_t>(rng.uniform_int(0, 3));
    const std::size_t b = (a + 1 + static_cast<std::size_t>(
                                       rng.uniform_int(0, 2))) % 4;
    rq.question.stem = given + ", what is the sum of the " + kChartCats[a] +
                       " and " + kChartCats[b] + " values?";
    placed = numeric_options(v[a] + v[b], rng);
  } else if (tpl == "chain") {
    rq.question.stem = given +
                       ", what is the sum of the two largest values minus the "
                       "smallest value?";
    placed = numeric_options(v[order[3]] + v[order[2]] - v[order[0]], rng);
  } else {  // pivot: doubling the runner-up makes it the new maximum
    const std::size_t second = order[2];
    const std::size_t top = order[3];
    rq.question.stem = given + ", if the " + kChartCats[second] +
                       " value is doubled, which category then shows the "
                       "largest value?";
    for (std::size_t i = 0; i < 4; ++i) rq.question.options[i] = kChartCats[i];
    rq.correct = static_cast<OptionLabel>(second);
    rq.intuition = static_cast<OptionLabel>(top);
    return rq;
  }
  rq.question.options = placed.texts;
  rq.correct = placed.correct;
  rq.intuition = placed.intuition;
  return rq;
}

RenderedQuestion render_spatial(std::string_view tpl, const SimSceneSpec& s,
                                Rng& rng) {
  const SpatialView view = spatial_view(s);
  const std::string given = "Given " + view.positions() + " on a grid";

  RenderedQuestion rq;
  PlacedOptions placed;
  if (tpl == "count") {
    const long long row = std::llround(attr(s, "row"));
    rq.question.stem = given + ", how many objects lie strictly above row " +
                       std::to_string(row) + " (y greater than " +
                       std::to_string(row) + ")?";
    long long c = 0;
    for (int y : view.ys)
      if (y > row) ++c;
    placed = numeric_options(c, rng);
  } else if (tpl == "read") {
    const std::size_t target =
        static_cast<std::size_t>(rng.uniform_int(0, 3));
    rq.question.stem = given + ", which object sits at position (" +
                       std::to_string(view.xs[target]) + ", " +
                       std::to_string(view.ys[target]) + ")?";
    for (std::size_t i = 0; i < 4; ++i)
      rq.question.options[i] = view.names[i];
    rq.correct = static_cast<OptionLabel>(target);
    rq.intuition = rq.correct;
    return rq;
  } else if (tpl == "measure") {
    const std::size_t other =
        1 + static_cast<std::size_t>(rng.uniform_int(0, 2));
    rq.question.stem = given + ", what is the Manhattan distance between the " +
                       view.names[0] + " and the " + view.names[other] + "?";
    placed = numeric_options(view.man(0, other), rng);
  } else if (tpl == "combine") {
    const std::size_t nearest =
        unique_arg(4, [&](std::size_t i) { return i == 0 ? 1 << 20
                                                         : view.man(0, i); },
                   /*want_max=*/false);
    rq.question.stem = given + ", which object is closest to the " +
                       view.names[0] + " by Manhattan distance?";
    std::vector<std::string> wrongs;
    for (std::size_t i = 1; i < 4; ++i)
      if (i != nearest) wrongs.push_back(view.names[i]);
    wrongs.push_back(view.decoy);
    placed = place_options(view.names[nearest], std::nullopt, wrongs, rng);
  } else if (tpl == "chain") {
    rq.question.stem = given + ", how many unit grid steps are needed to walk "
                       "from the " + view.names[0] + " to the " +
                       view.names[1] + " and then to the " + view.names[2] +
                       "?";
    placed = numeric_options(view.man(0, 1) + view.man(1, 2), rng);
  } else {  // pivot: straight-line eye vs grid-step distance disagree
    const std::size_t man_far =
        unique_arg(4, [&](std::size_t i) { return i == 0 ? -1
                                                         : view.man(0, i); },
                   /*want_max=*/true);
    const std::size_t cheb_far =
        unique_arg(4, [&](std::size_t i) { return i == 0 ? -1
                                                         : view.cheb(0, i); },
                   /*want_max=*/true);
    rq.question.stem = given + ", which object is farthest from the " +
                       view.names[0] +
                       " when distance is counted in unit grid steps "
                       "(Manhattan)?";
    std::vector<std::string> wrongs;
    for (std::size_t i = 1; i < 4; ++i)
      if (i != man_far && i != cheb_far) wrongs.push_back(view.names[i]);
    wrongs.push_back(view.decoy);
    placed = place_options(view.names[man_far], view.names[cheb_far], wrongs,
                           rng);
  }
  rq.question.options = placed.texts;
  rq.correct = placed.correct;
  rq.intuition = placed.intuition;
  return rq;
}

SimSceneSpec make_geometry(Rng& rng) {
  SimSceneSpec s;
  s.kind = "geometry";
  if (rng.bernoulli(0.5)) {
    s.shapes = {"square"};
    s.attributes["side"] = rng.uniform_int(3, 10);
  } else {
    s.shapes = {"rectangle"};
    const int h = rng.uniform_int(2, 9);
    const int w = h + 2 * rng.uniform_int(1, 3);  // longer and parity-matched
    s.attributes["width"] = w;
    s.attributes["height"] = h;
  }
  const int circles = rng.uniform_int(1, 4);
  s.attributes["circles"] = circles;
  for (int i = 0; i < circles; ++i) s.shapes.push_back("circle");
  return s;
}

SimSceneSpec make_chart(Rng& rng) {
  SimSceneSpec s;
  s.kind = "chart";
  s.shapes = {"bar_chart"};
  while (true) {
    std::array<long long, 4> v;
    bool distinct = true;
    for (auto& x : v) x = rng.uniform_int(2, 20);
    for (std::size_t i = 0; i < 4 && distinct; ++i)
      for (std::size_t j = i + 1; j < 4; ++j)
        if (v[i] == v[j]) distinct = false;
    if (!distinct) continue;
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    if (sorted[3] >= 2 * sorted[2]) continue;  // pivot must flip the maximum
    for (std::size_t i = 0; i < 4; ++i)
      s.attributes[kChartCats[i]] = static_cast<double>(v[i]);
    s.attributes["threshold"] =
        static_cast<double>(sorted[rng.uniform_int(0, 2)]);
    return s;
  }
}

SimSceneSpec make_spatial(Rng& rng) {
  SimSceneSpec s;
  s.kind = "spatial";
  std::vector<std::string> pool(kObjectPool.begin(), kObjectPool.end());
  shuffle(pool, rng);
  pool.resize(4);
  s.shapes = pool;

  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::vector<int> xs(4), ys(4);
    bool distinct = true;
    for (int i = 0; i < 4; ++i) {
      xs[i] = rng.uniform_int(0, 7);
      ys[i] = rng.uniform_int(0, 7);
      for (int j = 0; j < i; ++j)
        if (xs[i] == xs[j] && ys[i] == ys[j]) distinct = false;
    }
    if (!distinct) continue;

    const auto man = [&](int i, int j) {
      return std::abs(xs[i] - xs[j]) + std::abs(ys[i] - ys[j]);
    };
    const auto cheb = [&](int i, int j) {
      return std::max(std::abs(xs[i] - xs[j]), std::abs(ys[i] - ys[j]));
    };
    const auto nearest = unique_arg(
        4, [&](std::size_t i) { return i == 0 ? 1 << 20 : man(0, int(i)); },
        false);
    const auto man_far = unique_arg(
        4, [&](std::size_t i) { return i == 0 ? -1 : man(0, int(i)); }, true);
    const auto cheb_far = unique_arg(
        4, [&](std::size_t i) { return i == 0 ? -1 : cheb(0, int(i)); }, true);
    const auto npos = static_cast<std::size_t>(-1);
    if (nearest == npos || man_far == npos || cheb_far == npos) continue;
    if (man_far == cheb_far) continue;

    for (int i = 0; i < 4; ++i) {
      s.attributes[s.shapes[i] + "_x"] = xs[i];
      s.attributes[s.shapes[i] + "_y"] = ys[i];
    }
    s.attributes["row"] = rng.uniform_int(1, 6);
    return s;
  }
  throw Error("make_spatial: layout constraints unsatisfiable");
}

std::string malformed_text(std::string_view action, const SceneRef& scene) {
  const auto rq = render_template("read", scene);
  const std::string desc = describe_scene(scene.sim());
  const std::string mcq = render_mcq(rq.question);
  if (action == "mal:no_answer")
    return "<description>\n" + desc + "\n</description>\n\n<question>\n" +
           mcq + "\n</question>";
  if (action == "mal:three_options")
    return "<question>\n" + rq.question.stem + "\nA. " +
           rq.question.option(OptionLabel::A) + "\nB. " +
           rq.question.option(OptionLabel::B) + "\nC. " +
           rq.question.option(OptionLabel::C) +
           "\n</question>\n\n<answer>\nA\n</answer>";
  if (action == "mal:bad_label")
    return "<question>\n" + mcq + "\n</question>\n\n<answer>\nE\n</answer>";
  return desc + "\nThe figure above speaks for itself.";  // mal:free_text
}

// Strips a known prefix + blank line from a user prompt, returning the MCQ
// part, or the whole text when the prefix is absent.
std::string_view strip_prompt_prefix(std::string_view user,
                                     std::string_view prefix) {
  if (user.substr(0, prefix.size()) == prefix) {
    user.remove_prefix(prefix.size());
    while (!user.empty() && (user.front() == '\n' || user.front() == ' '))
      user.remove_prefix(1);
  }
  return user;
}

}  // namespace

const TemplateInfo* template_info(std::string_view id) {
  for (const auto& t : kTemplates)
    if (id == t.id) return &t;
  return nullptr;
}

SceneRef make_scene(std::uint64_t run_seed, std::string_view tag, int index) {
  Rng rng(mix_seed(run_seed, "scene:" + std::string(tag) + ":" +
                                 std::to_string(index)));
  SceneRef scene;
  scene.id = "sim-" + std::string(tag) + "-" + std::to_string(index);

  const double roll = rng.uniform();
  SimSceneSpec spec;
  if (roll < 0.66) {
    spec = make_geometry(rng);
  } else if (roll < 0.83) {
    spec = make_chart(rng);
  } else {
    spec = make_spatial(rng);
  }
  scene.source = std::move(spec);
  return scene;
}

std::vector<SceneRef> make_scenes(std::uint64_t run_seed, std::string_view tag,
                                  int count) {
  std::vector<SceneRef> scenes;
  scenes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    scenes.push_back(make_scene(run_seed, tag, i));
  return scenes;
}

std::string describe_scene(const SimSceneSpec& spec) {
  if (spec.kind == "geometry") {
    std::string d;
    if (spec.shapes.at(0) == "square") {
      d = "A square with side length " + fmt(attr(spec, "side"));
    } else {
      d = "A rectangle with width " + fmt(attr(spec, "width")) +
          " and height " + fmt(attr(spec, "height"));
    }
    const long long k = std::llround(attr(spec, "circles"));
    d += ", drawn next to " + std::to_string(k) +
         (k == 1 ? " circle." : " circles.");
    return d;
  }
  if (spec.kind == "chart") {
    std::string d = "A bar chart showing ";
    for (std::size_t i = 0; i < 4; ++i) {
      if (i) d += ", ";
      d += std::string(kChartCats[i]) + " " + fmt(attr(spec, kChartCats[i]));
    }
    return d + ".";
  }
  std::string d = "A grid scene with ";
  const SpatialView view = spatial_view(spec);
  d += view.positions();
  return d + ".";
}

RenderedQuestion render_template(std::string_view template_id,
                                 const SceneRef& scene) {
  const TemplateInfo* info = template_info(template_id);
  if (!info)
    throw ContractViolation("unknown template: " + std::string(template_id));
  if (!scene.is_sim())
    throw ContractViolation("render_template needs a simulated scene");

  Rng rng(mix_seed(scene_hash(scene), "render:" + std::string(template_id)));
  const auto& spec = scene.sim();
  RenderedQuestion rq;
  if (spec.kind == "geometry") {
    rq = render_geometry(template_id, spec, rng);
  } else if (spec.kind == "chart") {
    rq = render_chart(template_id, spec, rng);
  } else if (spec.kind == "spatial") {
    rq = render_spatial(template_id, spec, rng);
  } else {
    throw ContractViolation("unknown scene kind: " + spec.kind);
  }
  rq.template_id = info->id;
  rq.tier = info->tier;
  if (!info->trap) rq.intuition = rq.correct;
  return rq;
}

std::map<std::string, OptionLabel> answer_table(const SceneRef& scene) {
  std::map<std::string, OptionLabel> table;
  for (const auto& t : kTemplates)
    table[t.id] = render_template(t.id, scene).correct;
  return table;
}

std::optional<RenderedQuestion> match_question(const SceneRef& scene,
                                               const McqQuestion& question) {
  if (!scene.is_sim()) return std::nullopt;
  for (const auto& t : kTemplates) {
    auto rq = render_template(t.id, scene);
    if (rq.question == question) return rq;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// SimQuestionerBackend

SimQuestionerBackend::SimQuestionerBackend(std::uint64_t seed,
                                           SimQuestionerConfig cfg)
    : seed_(seed), lr_scale_(cfg.lr_scale) {
  std::vector<std::string> alphabet;
  std::vector<double> probs;
  std::array<int, 3> per_tier = {0, 0, 0};
  for (const auto& t : kTemplates) per_tier[t.tier] += 1;
  for (const auto& t : kTemplates) {
    alphabet.push_back(std::string("tpl:") + t.id);
    probs.push_back(cfg.validity_rate * cfg.tier_weights[t.tier] /
                    per_tier[t.tier]);
  }
  for (const char* mal :
       {"mal:no_answer", "mal:three_options", "mal:bad_label",
        "mal:free_text"}) {
    alphabet.push_back(mal);
    probs.push_back((1.0 - cfg.validity_rate) / 4.0);
  }
  policy_ = SoftmaxPolicy::from_probabilities(std::move(alphabet), probs);
}

std::vector<Generation> SimQuestionerBackend::generate(
    const GenerateRequest& request) {
  if (!request.scene.is_sim())
    throw ConfigError("simulated questioner needs simulated scenes, got '" +
                      request.scene.id + "'");
  log_request(request);
  Rng rng(mix_seed(seed_, request.scene.id + "|" + request.purpose + "|" +
                              std::to_string(calls_++)));
  std::vector<Generation> out;
  out.reserve(static_cast<std::size_t>(request.n));
  for (int i = 0; i < request.n; ++i) {
    const std::size_t action = policy_.sample(rng, request.temperature);
    const std::string& name = policy_.action_alphabet[action];
    Generation g;
    g.action_id = name;
    g.log_prob = policy_.log_prob(action);
    if (name.starts_with("tpl:")) {
      const auto rq = render_template(name.substr(4), request.scene);
      g.text = render_questioner_output(describe_scene(request.scene.sim()),
                                        rq.question, rq.intuition);
    } else {
      g.text = malformed_text(name, request.scene);
    }
    out.push_back(std::move(g));
  }
  return out;
}

void SimQuestionerBackend::apply_grpo_update(
    std::span<const GroupRollout> groups, const LoopConfig& cfg) {
  if (groups.empty()) return;
  const SoftmaxPolicy old = policy_;
  const double step = cfg.learning_rate * lr_scale_;
  for (int epoch = 0; epoch < cfg.questioner_epochs; ++epoch) {
    const auto grad = policy_gradient(policy_, old, groups, cfg.clip_epsilon,
                                      cfg.kl_beta);
    for (std::size_t k = 0; k < policy_.logits.size(); ++k)
      policy_.logits[k] -= step * grad[k];
  }
}

std::unique_ptr<PolicyBackend> SimQuestionerBackend::snapshot() const {
  return std::make_unique<SimQuestionerBackend>(*this);
}

double SimQuestionerBackend::valid_action_mass() const {
  const auto p = policy_.probabilities();
  double mass = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (policy_.action_alphabet[i].starts_with("tpl:")) mass += p[i];
  return mass;
}

// ---------------------------------------------------------------------------
// SimSolverBackend

SimSolverBackend::SimSolverBackend(std::uint64_t seed, SimSolverConfig cfg)
    : seed_(seed), lr_scale_(cfg.lr_scale) {
  for (int tier = 0; tier < 3; ++tier) {
    const std::string prefix = "t" + std::to_string(tier) + ":";
    std::vector<std::string> alphabet = {prefix + "correct"};
    std::vector<double> probs = {cfg.accuracy[tier]};
    for (int w = 0; w < 3; ++w) {
      alphabet.push_back(prefix + "wrong:" + std::to_string(w));
      probs.push_back((1.0 - cfg.accuracy[tier]) * cfg.confusion[w]);
    }
    tier_policies_[tier] =
        SoftmaxPolicy::from_probabilities(std::move(alphabet), probs);
  }
}

std::vector<Generation> SimSolverBackend::generate(
    const GenerateRequest& request) {
  log_request(request);
  Rng rng(mix_seed(seed_, request.scene.id + "|" + request.purpose + "|" +
                              std::to_string(calls_++)));

  const auto body =
      strip_prompt_prefix(request.user, prompts::kSolverUserPrefix);
  const auto mcq = parse_mcq_text(body);
  std::optional<RenderedQuestion> matched;
  if (mcq) matched = match_question(request.scene, *mcq);

  std::vector<Generation> out;
  out.reserve(static_cast<std::size_t>(request.n));
  for (int i = 0; i < request.n; ++i) {
    Generation g;
    OptionLabel answer = OptionLabel::A;
    std::string note = "the layout";
    if (matched) {
      auto& policy = tier_policies_[matched->tier];
      const std::size_t action = policy.sample(rng, request.temperature);
      g.action_id = policy.action_alphabet[action];
      g.log_prob = policy.log_prob(action);
      if (action == 0) {
        answer = matched->correct;
      } else {
        std::array<OptionLabel, 3> wrongs;
        std::size_t w = 0;
        for (OptionLabel label : kAllLabels)
          if (label != matched->correct) wrongs[w++] = label;
        answer = wrongs[action - 1];
      }
      note = "the " + matched->template_id + " question";
    } else {
      // No template matched: the question is foreign or garbled, so the
      // reasoning scatters uniformly.
      answer = static_cast<OptionLabel>(rng.uniform_int(0, 3));
    }
    g.text = "<think>Working through " + note +
             " step by step against the stated values.</think>\nThe final "
             "answer is \\boxed{" +
             to_string(answer) + "}.";
    out.push_back(std::move(g));
  }
  return out;
}

void SimSolverBackend::apply_grpo_update(std::span<const GroupRollout> groups,
                                         const LoopConfig& cfg) {
  std::array<std::vector<GroupRollout>, 3> buckets;
  for (const auto& group : groups) {
    int tier = -1;
    for (const auto& c : group.completions) {
      if (c.action_id.size() > 1 && c.action_id[0] == 't') {
        tier = c.action_id[1] - '0';
        break;
      }
    }
    if (tier < 0 || tier > 2) continue;  // foreign question, nothing to train
    buckets[static_cast<std::size_t>(tier)].push_back(group);
  }
  for (int tier = 0; tier < 3; ++tier) {
    auto& bucket = buckets[static_cast<std::size_t>(tier)];
    if (bucket.empty()) continue;
    auto& policy = tier_policies_[static_cast<std::size_t>(tier)];
    const SoftmaxPolicy old = policy;
    const double step = cfg.learning_rate * lr_scale_;
    for (int epoch = 0; epoch < cfg.solver_epochs; ++epoch) {
      const auto grad =
          policy_gradient(policy, old, bucket, cfg.clip_epsilon, cfg.kl_beta);
      for (std::size_t k = 0; k < policy.logits.size(); ++k)
        policy.logits[k] -= step * grad[k];
    }
  }
}

std::unique_ptr<PolicyBackend> SimSolverBackend::snapshot() const {
  return std::make_unique<SimSolverBackend>(*this);
}

double SimSolverBackend::accuracy(int tier) const {
  return tier_policies_.at(static_cast<std::size_t>(tier)).probabilities()[0];
}

// ---------------------------------------------------------------------------
// SimJudgeBackend

std::vector<Generation> SimJudgeBackend::generate(
    const GenerateRequest& request) {
  log_request(request);
  const auto body =
      strip_prompt_prefix(request.user, prompts::kJudgeUserPrefix);
  const auto mcq = parse_mcq_text(body);
  std::optional<RenderedQuestion> matched;
  if (mcq) matched = match_question(request.scene, *mcq);

  std::string reply = "cannot score this question";
  if (matched) {
    reply = matched->tier == 2 ? "0.9" : matched->tier == 1 ? "0.55" : "0.15";
  }
  return std::vector<Generation>(static_cast<std::size_t>(request.n),
                                 Generation{reply, std::nullopt, ""});
}

std::unique_ptr<PolicyBackend> SimJudgeBackend::snapshot() const {
  return std::make_unique<SimJudgeBackend>(*this);
}

}  // namespace coevo::sim
