#include "dlab/env/gridworld.hpp"

#include <algorithm>
#include <stdexcept>

#include "dlab/errors.hpp"

namespace dlab::env {

namespace {

std::vector<Point> block_mask(int w, int h) {
  std::vector<Point> m;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.push_back({x, y});
  return m;
}

// Center plus its four neighbours.
std::vector<Point> plus_mask() { return {{1, 0}, {0, 1}, {1, 1}, {2, 1}, {1, 2}}; }

ObjectSpec controllable(Point start) {
  return {"agent", block_mask(3, 3), true, start, std::nullopt};
}

ObjectSpec obstacle(std::string name, std::vector<Point> mask, std::optional<Rect> region) {
  return {std::move(name), std::move(mask), false, {}, region};
}

constexpr int kHalf = kGridSize / 2;

}  // namespace

std::string_view action_name(Action a) {
  switch (a) {
    case Action::left: return "left";
    case Action::right: return "right";
    case Action::up: return "up";
    case Action::down: return "down";
  }
  return "?";
}

Action action_from_index(std::size_t i) {
  if (i >= kNumActions) throw std::out_of_range("action index out of range");
  return static_cast<Action>(i);
}

std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::simple: return "simple";
    case Scenario::situation1: return "situation1";
    case Scenario::situation2: return "situation2";
    case Scenario::reward: return "reward";
  }
  return "?";
}

Scenario parse_scenario(std::string_view name) {
  for (auto s : {Scenario::simple, Scenario::situation1, Scenario::situation2, Scenario::reward})
    if (scenario_name(s) == name) return s;
  throw ConfigError("unknown scenario: " + std::string(name));
}

int ObjectSpec::width() const {
  int w = 0;
  for (auto p : mask) w = std::max(w, p.x + 1);
  return w;
}

int ObjectSpec::height() const {
  int h = 0;
  for (auto p : mask) h = std::max(h, p.y + 1);
  return h;
}

Point ObjectSpec::min_anchor() const {
  const Rect r = region();
  return {r.x0, r.y0};
}

Point ObjectSpec::max_anchor() const {
  const Rect r = region();
  return {r.x1 - width(), r.y1 - height()};
}

EnvConfig EnvConfig::for_scenario(Scenario s) {
  EnvConfig c;
  c.scenario = s;
  switch (s) {
    case Scenario::simple:
      c.reset_anchor = {20, 20};
      c.objects = {controllable(c.reset_anchor)};
      break;
    case Scenario::situation1:
    case Scenario::reward:
      c.reset_anchor = {20, 20};
      c.objects = {controllable(c.reset_anchor), obstacle("bar3x1", block_mask(3, 1), std::nullopt)};
      break;
    case Scenario::situation2:
      // Obstacles take the three quadrants that do not contain the start.
      c.reset_anchor = {2, 2};
      c.objects = {controllable(c.reset_anchor),
                   obstacle("bar3x1", block_mask(3, 1), Rect{kHalf, 0, kGridSize, kHalf}),
                   obstacle("bar1x3", block_mask(1, 3), Rect{0, kHalf, kHalf, kGridSize}),
                   obstacle("plus", plus_mask(), Rect{kHalf, kHalf, kGridSize, kGridSize})};
      break;
  }
  c.validate();
  return c;
}

void EnvConfig::validate() const {
  if (objects.empty() || !objects.front().controllable)
    throw ConfigError("object 0 must be the controllable object");
  for (std::size_t i = 1; i < objects.size(); ++i)
    if (objects[i].controllable) throw ConfigError("exactly one controllable object allowed");
  static constexpr std::size_t expected[] = {0, 1, 3, 1};
  if (obstacle_count() != expected[static_cast<int>(scenario)])
    throw ConfigError("scenario " + std::string(scenario_name(scenario)) + " expects " +
                      std::to_string(expected[static_cast<int>(scenario)]) + " obstacles");
  for (const auto& o : objects) {
    if (o.mask.empty()) throw ConfigError("object " + o.name + " has an empty mask");
    for (auto p : o.mask)
      if (p.x < 0 || p.y < 0) throw ConfigError("mask offsets must be non-negative");
    const Rect r = o.region();
    if (r.x0 < 0 || r.y0 < 0 || r.x1 > kGridSize || r.y1 > kGridSize)
      throw ConfigError("confinement of " + o.name + " leaves the grid");
    const Point lo = o.min_anchor(), hi = o.max_anchor();
    if (hi.x < lo.x || hi.y < lo.y)
      throw ConfigError("object " + o.name + " does not fit its confinement");
  }
  const auto& agent = objects.front();
  const Point lo = agent.min_anchor(), hi = agent.max_anchor();
  if (reset_anchor.x < lo.x || reset_anchor.x > hi.x || reset_anchor.y < lo.y ||
      reset_anchor.y > hi.y)
    throw ConfigError("reset anchor outside the legal range");
}

Point displacement(Action a) {
  switch (a) {
    case Action::left: return {-1, 0};
    case Action::right: return {1, 0};
    case Action::up: return {0, -1};
    case Action::down: return {0, 1};
  }
  return {0, 0};
}

Point move_anchor(Point anchor, Action a, int magnitude, Point lo, Point hi) {
  const Point d = displacement(a);
  return {std::clamp(anchor.x + d.x * magnitude, lo.x, hi.x),
          std::clamp(anchor.y + d.y * magnitude, lo.y, hi.y)};
}

Gridworld::Gridworld(EnvConfig config) : config_(std::move(config)) {
  config_.validate();
  for (const auto& o : config_.objects) {
    PixelSet m;
    for (auto p : o.mask) m.set(static_cast<std::size_t>(p.y * kGridSize + p.x));
    base_masks_.push_back(m);
  }
}

PixelSet Gridworld::object_pixels(std::size_t object, Point anchor) const {
  const PixelSet& m = base_masks_.at(object);
  return (m << static_cast<std::size_t>(anchor.y * kGridSize)) << static_cast<std::size_t>(anchor.x);
}

PixelSet Gridworld::obstacle_pixels(const EnvState& s) const {
  PixelSet all;
  for (std::size_t i = 1; i < s.anchors.size(); ++i) all |= object_pixels(i, s.anchors[i]);
  return all;
}

bool Gridworld::collides(const EnvState& s) const {
  return (object_pixels(0, s.anchors[0]) & obstacle_pixels(s)).any();
}

EnvState Gridworld::random_state(Rng& rng) const {
  EnvState s;
  s.rng.seed(rng());
  s.anchors.resize(config_.objects.size());
  do {
    for (std::size_t i = 0; i < config_.objects.size(); ++i) {
      const auto& o = config_.objects[i];
      const Point lo = o.min_anchor(), hi = o.max_anchor();
      s.anchors[i] = {std::uniform_int_distribution<int>(lo.x, hi.x)(rng),
                      std::uniform_int_distribution<int>(lo.y, hi.y)(rng)};
    }
  } while (collides(s));
  return s;
}

EnvState Gridworld::reset(std::uint64_t seed) const {
  Rng rng(seed);
  EnvState s = random_state(rng);
  s.anchors[0] = config_.reset_anchor;
  while (collides(s)) {
    for (std::size_t i = 1; i < s.anchors.size(); ++i) {
      const auto& o = config_.objects[i];
      const Point lo = o.min_anchor(), hi = o.max_anchor();
      s.anchors[i] = {std::uniform_int_distribution<int>(lo.x, hi.x)(rng),
                      std::uniform_int_distribution<int>(lo.y, hi.y)(rng)};
    }
  }
  s.steps = 0;
  return s;
}

bool Gridworld::is_legal(const EnvState& s) const {
  if (s.anchors.size() != config_.objects.size()) return false;
  for (std::size_t i = 0; i < s.anchors.size(); ++i) {
    const Point lo = config_.objects[i].min_anchor(), hi = config_.objects[i].max_anchor();
    const Point a = s.anchors[i];
    if (a.x < lo.x || a.x > hi.x || a.y < lo.y || a.y > hi.y) return false;
  }
  return true;
}

void Gridworld::render_into(const EnvState& s, float* out) const { render_anchors(s.anchors, out); }

void Gridworld::render_anchors(const std::vector<Point>& anchors, float* out) const {
  std::fill(out, out + kImagePixels, 0.0f);
  for (std::size_t i = 0; i < anchors.size(); ++i)
    for (auto p : config_.objects[i].mask)
      out[(anchors[i].y + p.y) * kGridSize + anchors[i].x + p.x] = 1.0f;
}

Image Gridworld::render(const EnvState& s) const {
  Image img(kImagePixels);
  render_into(s, img.data());
  return img;
}

StepResult Gridworld::advance(EnvState s, Action a) const {
  std::uniform_int_distribution<int> magnitude(1, 3);
  std::uniform_int_distribution<int> action(0, static_cast<int>(kNumActions) - 1);
  const auto& agent = config_.objects.front();
  const int m = config_.deterministic ? 1 : magnitude(s.rng);
  s.anchors[0] = move_anchor(s.anchors[0], a, m, agent.min_anchor(), agent.max_anchor());
  if (!config_.deterministic) {
    for (std::size_t i = 1; i < s.anchors.size(); ++i) {
      const auto& o = config_.objects[i];
      const Action oa = action_from_index(static_cast<std::size_t>(action(s.rng)));
      const int om = magnitude(s.rng);
      s.anchors[i] = move_anchor(s.anchors[i], oa, om, o.min_anchor(), o.max_anchor());
    }
  }
  bool collided = false;
  if (collides(s)) {
    s.anchors[0] = config_.reset_anchor;
    collided = true;
  }
  ++s.steps;
  return {std::move(s), collided};
}

std::vector<EnvState> Gridworld::sample_successors(const EnvState& s, Action a,
                                                   std::size_t n) const {
  std::vector<EnvState> out;
  out.reserve(n);
  EnvState cursor = s;
  for (std::size_t i = 0; i < n; ++i) {
    EnvState next = advance(cursor, a).state;
    cursor.rng = next.rng;
    out.push_back(std::move(next));
  }
  return out;
}

std::vector<Image> Gridworld::sample_next_states(const EnvState& s, Action a,
                                                 std::size_t n) const {
  std::vector<Image> out;
  out.reserve(n);
  for (const auto& next : sample_successors(s, a, n)) out.push_back(render(next));
  return out;
}

RewardStep Gridworld::reward_step(const EnvState& s, Action a) const {
  if (config_.scenario != Scenario::reward)
    throw std::logic_error("reward_step called on scenario " +
                           std::string(scenario_name(config_.scenario)));
  auto [next, collided] = advance(s, a);
  const Point g = config_.goal_pixel;
  const bool goal =
      object_pixels(0, next.anchors[0]).test(static_cast<std::size_t>(g.y * kGridSize + g.x));
  RewardStep r;
  r.reward = goal ? 1.0f : 0.0f;
  r.done = goal || next.steps >= config_.max_steps;
  r.collided = collided;
  r.state = std::move(next);
  return r;
}

}  // namespace dlab::env
