#include "mogen/synthworld/motion.hpp"

#include <cmath>

namespace mogen::world {

Skeleton Skeleton::standard() {
  Skeleton s;
  s.joint_count = 8;
  //                 pelvis spine chest head  l_hand r_hand l_foot r_foot
  s.parent = {-1, 0, 1, 2, 2, 2, 0, 0};
  s.bone_length = {0.0, 0.22, 0.22, 0.18, 0.45, 0.45, 0.50, 0.50};
  s.joint_name = {"pelvis", "spine",  "chest",  "head",
                  "l_hand", "r_hand", "l_foot", "r_foot"};
  s.validate();
  return s;
}

void Skeleton::validate() const {
  if (joint_count < 1 || static_cast<int>(parent.size()) != joint_count ||
      static_cast<int>(bone_length.size()) != joint_count)
    throw std::invalid_argument("skeleton: inconsistent joint tables");
  if (parent[0] != -1) throw std::invalid_argument("skeleton: joint 0 must be root");
  for (int j = 1; j < joint_count; ++j) {
    if (parent[j] < 0 || parent[j] >= j)
      throw std::invalid_argument("skeleton: topology must be a tree rooted at 0");
    if (!(bone_length[j] > 0.0))
      throw std::invalid_argument("skeleton: bone lengths must be positive");
  }
}

bool MotionSequence::finite() const {
  for (float v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

BodyRegion MetaMotion::body_region() const { return primitive_region(primitive); }

const char* primitive_name(Primitive p) {
  switch (p) {
    case Primitive::walk: return "walk";
    case Primitive::run: return "run";
    case Primitive::jump: return "jump";
    case Primitive::turn_left: return "turn_left";
    case Primitive::turn_right: return "turn_right";
    case Primitive::wave_left_arm: return "wave_left_arm";
    case Primitive::wave_right_arm: return "wave_right_arm";
    case Primitive::raise_both_arms: return "raise_both_arms";
    case Primitive::crouch: return "crouch";
    case Primitive::kick: return "kick";
    case Primitive::sit: return "sit";
    case Primitive::stand_still: return "stand_still";
  }
  throw std::invalid_argument("unknown primitive");
}

Primitive primitive_from_name(const std::string& name) {
  for (int i = 0; i < kPrimitiveCount; ++i) {
    const auto p = static_cast<Primitive>(i);
    if (name == primitive_name(p)) return p;
  }
  throw std::invalid_argument("unknown primitive '" + name + "'");
}

BodyRegion primitive_region(Primitive p) {
  switch (p) {
    case Primitive::walk:
    case Primitive::run:
    case Primitive::turn_left:
    case Primitive::turn_right:
    case Primitive::stand_still: return BodyRegion::locomotion;
    case Primitive::wave_left_arm:
    case Primitive::wave_right_arm:
    case Primitive::raise_both_arms: return BodyRegion::upper;
    case Primitive::crouch:
    case Primitive::kick: return BodyRegion::lower;
    case Primitive::jump:
    case Primitive::sit: return BodyRegion::full;
  }
  throw std::invalid_argument("unknown primitive");
}

int primitive_default_duration(Primitive p) {
  switch (p) {
    case Primitive::walk: return 32;
    case Primitive::run: return 24;
    case Primitive::jump: return 20;
    case Primitive::turn_left:
    case Primitive::turn_right: return 24;
    case Primitive::wave_left_arm:
    case Primitive::wave_right_arm: return 24;
    case Primitive::raise_both_arms: return 20;
    case Primitive::crouch: return 20;
    case Primitive::kick: return 16;
    case Primitive::sit: return 24;
    case Primitive::stand_still: return 16;
  }
  throw std::invalid_argument("unknown primitive");
}

MetaMotion meta_of(Primitive p) {
  MetaMotion m;
  m.id = static_cast<int>(p);
  m.primitive = p;
  m.duration_frames = primitive_default_duration(p);
  return m;
}

}  // namespace mogen::world
