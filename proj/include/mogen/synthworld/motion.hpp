#pragma once

// Core motion-world types: the 2-D skeleton, motion sequences, motion
// primitives, and prompt records.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mogen::world {

// Side-view 2-D skeleton, a tree rooted at the pelvis.
struct Skeleton {
  int joint_count = 8;
  std::vector<int> parent;          // parent[0] == -1
  std::vector<double> bone_length;  // bone_length[0] unused (root)
  std::vector<std::string> joint_name;

  static Skeleton standard();
  void validate() const;
};

// Frames x feature matrix; D = 2*joint_count + 2 (root-relative joint
// positions, then root planar velocity per frame). Joint 0 is the root and
// its root-relative coordinates are identically zero.
struct MotionSequence {
  int frames = 0;
  int feature_dim = 0;
  int fps = 20;
  std::vector<float> data;  // row-major [frames, feature_dim]

  float& at(int t, int d) { return data[static_cast<std::size_t>(t) * feature_dim + d]; }
  float at(int t, int d) const {
    return data[static_cast<std::size_t>(t) * feature_dim + d];
  }
  bool finite() const;
};

enum class Primitive : std::uint8_t {
  walk,
  run,
  jump,
  turn_left,
  turn_right,
  wave_left_arm,
  wave_right_arm,
  raise_both_arms,
  crouch,
  kick,
  sit,
  stand_still,
};

inline constexpr int kPrimitiveCount = 12;

enum class BodyRegion : std::uint8_t { locomotion, upper, lower, full };

enum class Connector : std::uint8_t { none, then, while_ };

struct MetaMotion {
  int id = -1;
  Primitive primitive = Primitive::stand_still;
  int duration_frames = 16;

  BodyRegion body_region() const;
  std::string verb_phrase() const;  // third-person singular
  std::string verb_phrase_gerund() const;
};

const char* primitive_name(Primitive p);
Primitive primitive_from_name(const std::string& name);
BodyRegion primitive_region(Primitive p);
int primitive_default_duration(Primitive p);

// Canonical meta-motion for a primitive (id == enum value).
MetaMotion meta_of(Primitive p);

struct PromptRecord {
  std::string text;
  std::vector<int> token_ids;
  std::vector<std::string> pos_tags;  // one per token
  std::vector<int> meta_ids;          // 1 (atomic) or 2 (composition)
  Connector connector = Connector::none;
  bool paired = false;
  std::string motion_ref;  // relative payload path, empty for text-only
  std::uint64_t record_seed = 0;
};

}  // namespace mogen::world
