#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace dlab::env {

inline constexpr int kGridSize = 24;
inline constexpr std::size_t kImagePixels = kGridSize * kGridSize;
inline constexpr std::size_t kNumActions = 4;

using Rng = std::mt19937_64;
// Row-major 24x24 intensities in [0, 1]; pixel (x, y) is at y * 24 + x.
using Image = std::vector<float>;
using PixelSet = std::bitset<kImagePixels>;

enum class Action : std::uint8_t { left = 0, right = 1, up = 2, down = 3 };
inline constexpr std::array<Action, kNumActions> kAllActions{Action::left, Action::right,
                                                             Action::up, Action::down};

std::string_view action_name(Action a);
Action action_from_index(std::size_t i);

enum class Scenario : std::uint8_t { simple = 0, situation1 = 1, situation2 = 2, reward = 3 };

std::string_view scenario_name(Scenario s);
// Throws dlab::ConfigError on an unknown name.
Scenario parse_scenario(std::string_view name);

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Pixel rectangle [x0, x1) x [y0, y1) an object's mask must stay inside.
struct Rect {
  int x0 = 0;
  int y0 = 0;
  int x1 = kGridSize;
  int y1 = kGridSize;
};

struct ObjectSpec {
  std::string name;
  std::vector<Point> mask;  // offsets from the top-left anchor
  bool controllable = false;
  Point start;
  std::optional<Rect> confinement;

  int width() const;
  int height() const;
  Rect region() const { return confinement.value_or(Rect{}); }
  Point min_anchor() const;
  Point max_anchor() const;
};

struct EnvConfig {
  Scenario scenario = Scenario::situation1;
  // Object 0 is the controllable object; the rest are obstacles.
  std::vector<ObjectSpec> objects;
  Point reset_anchor{20, 20};
  Point goal_pixel{2, 2};
  std::uint32_t max_steps = 2000;
  // Unit moves and frozen obstacles; used for degenerate-stochasticity tests.
  bool deterministic = false;

  static EnvConfig for_scenario(Scenario s);
  std::size_t obstacle_count() const { return objects.size() - 1; }
  // Throws dlab::ConfigError when the config violates its invariants.
  void validate() const;
};

struct EnvState {
  std::vector<Point> anchors;
  std::uint32_t steps = 0;
  Rng rng;
};

struct StepResult {
  EnvState state;
  bool collided = false;
};

struct RewardStep {
  EnvState state;
  float reward = 0.0f;
  bool done = false;
  bool collided = false;
};

Point displacement(Action a);
// Moves `anchor` by `magnitude` pixels along `a`, clamped to [lo, hi].
Point move_anchor(Point anchor, Action a, int magnitude, Point lo, Point hi);

class Gridworld {
 public:
  explicit Gridworld(EnvConfig config);

  const EnvConfig& config() const { return config_; }

  // Controllable object at its reset anchor, obstacles at uniformly random
  // legal anchors not overlapping it.
  EnvState reset(std::uint64_t seed) const;
  // Uniformly random legal anchors for every object, rejecting overlaps
  // between the controllable object and obstacles.
  EnvState random_state(Rng& rng) const;
  bool is_legal(const EnvState& s) const;

  PixelSet object_pixels(std::size_t object, Point anchor) const;
  PixelSet obstacle_pixels(const EnvState& s) const;
  bool collides(const EnvState& s) const;

  Image render(const EnvState& s) const;
  void render_into(const EnvState& s, float* out) const;
  // Renders objects at `anchors` (one per configured object, or fewer).
  void render_anchors(const std::vector<Point>& anchors, float* out) const;

  StepResult advance(EnvState s, Action a) const;
  EnvState step(const EnvState& s, Action a) const { return advance(s, a).state; }

  // n independent successors of `s` under `a`. `s` itself is not modified;
  // the successors draw from a copy of its RNG stream.
  std::vector<EnvState> sample_successors(const EnvState& s, Action a, std::size_t n) const;
  std::vector<Image> sample_next_states(const EnvState& s, Action a, std::size_t n) const;

  // Throws std::logic_error unless the scenario is `reward`.
  RewardStep reward_step(const EnvState& s, Action a) const;

 private:
  EnvConfig config_;
  std::vector<PixelSet> base_masks_;  // each object's mask at anchor (0, 0)
};

}  // namespace dlab::env
