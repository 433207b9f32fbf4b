#include "mogen/synthworld/primitives.hpp"

#include <cmath>

#include "mogen/autodiff/rng.hpp"

namespace mogen::world {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Joint indices of the standard skeleton.
enum : int { kPelvis = 0, kSpine, kChest, kHead, kLHand, kRHand, kLFoot, kRFoot };

// Rest angles from +x, side view (x forward, y up).
constexpr double kRest[8] = {0.0,  kPi / 2, kPi / 2, kPi / 2,
                             -1.85, -1.29,  -1.75,   -1.39};

struct Pose {
  double angle[8];
  double vx = 0.0, vy = 0.0;  // root velocity, units/second

  Pose() {
    for (int j = 0; j < 8; ++j) angle[j] = kRest[j];
  }
};

double smoothstep01(double x) {
  x = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
  return x * x * (3.0 - 2.0 * x);
}

// Vertical root displacement profile for jump; velocity is its discrete
// derivative.
double jump_height(double tau) {
  if (tau < 0.3) return -0.12 * std::sin(kPi * tau / 0.3);
  if (tau <= 0.8) {
    const double s = (tau - 0.3) / 0.5;
    return 0.30 * 4.0 * s * (1.0 - s);
  }
  return 0.0;
}

double crouch_depth(double tau) { return -0.15 * smoothstep01(tau / 0.4); }
double sit_depth(double tau) { return -0.25 * smoothstep01(tau / 0.4); }

Pose primitive_pose(Primitive p, int t, int frames, int fps) {
  Pose pose;
  const double sec = static_cast<double>(t) / fps;
  const double tau = frames > 1 ? static_cast<double>(t) / (frames - 1) : 0.0;
  switch (p) {
    case Primitive::stand_still:
      break;
    case Primitive::walk: {
      const double phi = 2.0 * kPi * 1.25 * sec;
      pose.angle[kLFoot] += 0.50 * std::sin(phi);
      pose.angle[kRFoot] -= 0.50 * std::sin(phi);
      pose.angle[kLHand] -= 0.25 * std::sin(phi);
      pose.angle[kRHand] += 0.25 * std::sin(phi);
      pose.vx = 0.8;
      break;
    }
    case Primitive::run: {
      const double phi = 2.0 * kPi * 2.2 * sec;
      pose.angle[kLFoot] += 0.80 * std::sin(phi);
      pose.angle[kRFoot] -= 0.80 * std::sin(phi);
      pose.angle[kLHand] -= 0.50 * std::sin(phi);
      pose.angle[kRHand] += 0.50 * std::sin(phi);
      pose.angle[kSpine] += 0.10;  // forward lean
      pose.vx = 2.0;
      pose.vy = 0.15 * std::cos(2.0 * phi);
      break;
    }
    case Primitive::jump: {
      const double tuck = tau < 0.3 ? smoothstep01(tau / 0.3)
                                    : (tau <= 0.8 ? 1.0 : smoothstep01((1.0 - tau) / 0.2));
      pose.angle[kLFoot] += 0.55 * tuck;
      pose.angle[kRFoot] += 0.55 * tuck;
      pose.angle[kLHand] += 1.10 * tuck;
      pose.angle[kRHand] += 1.10 * tuck;
      const double h = 1.0 / static_cast<double>(frames > 1 ? frames - 1 : 1);
      pose.vy = (jump_height(std::min(tau + h, 1.0)) - jump_height(tau)) * fps;
      break;
    }
    case Primitive::turn_left:
    case Primitive::turn_right: {
      const double sign = p == Primitive::turn_left ? 1.0 : -1.0;
      const double phi = 2.0 * kPi * 1.0 * sec;
      const double lean = sign * 0.18 * smoothstep01(tau);
      pose.angle[kLFoot] += 0.30 * std::sin(phi);
      pose.angle[kRFoot] -= 0.30 * std::sin(phi);
      pose.angle[kSpine] += lean;
      pose.angle[kChest] += lean;
      pose.angle[kHead] += 0.6 * lean;
      break;
    }
    case Primitive::wave_left_arm: {
      const double up = smoothstep01(tau / 0.25);
      pose.angle[kLHand] = kRest[kLHand] + up * (1.0 - kRest[kLHand]) +
                           0.45 * up * std::sin(2.0 * kPi * 2.0 * sec);
      break;
    }
    case Primitive::wave_right_arm: {
      const double up = smoothstep01(tau / 0.25);
      pose.angle[kRHand] = kRest[kRHand] + up * (1.0 - kRest[kRHand]) +
                           0.45 * up * std::sin(2.0 * kPi * 2.0 * sec);
      break;
    }
    case Primitive::raise_both_arms: {
      const double up = smoothstep01(tau / 0.5);
      pose.angle[kLHand] = kRest[kLHand] + up * (1.41 - kRest[kLHand]);
      pose.angle[kRHand] = kRest[kRHand] + up * (1.41 - kRest[kRHand]);
      break;
    }
    case Primitive::crouch: {
      const double c = smoothstep01(tau / 0.4);
      pose.angle[kLFoot] += 0.50 * c;
      pose.angle[kRFoot] += 0.50 * c;
      pose.angle[kSpine] -= 0.15 * c;
      const double h = 1.0 / static_cast<double>(frames > 1 ? frames - 1 : 1);
      pose.vy = (crouch_depth(std::min(tau + h, 1.0)) - crouch_depth(tau)) * fps;
      break;
    }
    case Primitive::kick: {
      const double swing = std::sin(kPi * std::min(tau / 0.7, 1.0));
      pose.angle[kRFoot] += 1.20 * swing * swing;
      pose.angle[kLHand] -= 0.20 * swing;
      break;
    }
    case Primitive::sit: {
      const double c = smoothstep01(tau / 0.4);
      pose.angle[kLFoot] = kRest[kLFoot] + c * (-0.60 - kRest[kLFoot]);
      pose.angle[kRFoot] = kRest[kRFoot] + c * (-0.60 - kRest[kRFoot]);
      const double h = 1.0 / static_cast<double>(frames > 1 ? frames - 1 : 1);
      pose.vy = (sit_depth(std::min(tau + h, 1.0)) - sit_depth(tau)) * fps;
      break;
    }
  }
  return pose;
}

void write_frame(MotionSequence& m, int t, const Pose& pose, const Skeleton& sk,
                 Rng& noise) {
  std::vector<double> px(sk.joint_count), py(sk.joint_count);
  px[0] = 0.0;
  py[0] = 0.0;
  for (int j = 1; j < sk.joint_count; ++j) {
    px[j] = px[sk.parent[j]] + sk.bone_length[j] * std::cos(pose.angle[j]);
    py[j] = py[sk.parent[j]] + sk.bone_length[j] * std::sin(pose.angle[j]);
  }
  m.at(t, 0) = 0.0f;
  m.at(t, 1) = 0.0f;
  for (int j = 1; j < sk.joint_count; ++j) {
    const double sigma = 0.01 * sk.bone_length[j];
    m.at(t, 2 * j) = static_cast<float>(px[j] + noise.normal(0.0, sigma));
    m.at(t, 2 * j + 1) = static_cast<float>(py[j] + noise.normal(0.0, sigma));
  }
  m.at(t, 2 * sk.joint_count) = static_cast<float>(pose.vx);
  m.at(t, 2 * sk.joint_count + 1) = static_cast<float>(pose.vy);
}

}  // namespace

MotionSequence render_primitive(const MetaMotion& meta, const Skeleton& skeleton,
                                std::uint64_t noise_seed) {
  skeleton.validate();
  if (meta.duration_frames < 8)
    throw std::invalid_argument("render: duration_frames must be >= 8");
  const int p = static_cast<int>(meta.primitive);
  if (p < 0 || p >= kPrimitiveCount)
    throw std::invalid_argument("render: unknown primitive");
  MotionSequence m;
  m.frames = meta.duration_frames;
  m.feature_dim = feature_dim(skeleton);
  m.data.assign(static_cast<std::size_t>(m.frames) * m.feature_dim, 0.0f);
  Rng noise(noise_seed);
  for (int t = 0; t < m.frames; ++t)
    write_frame(m, t, primitive_pose(meta.primitive, t, m.frames, m.fps), skeleton,
                noise);
  return m;
}

bool while_compatible(const MetaMotion& a, const MetaMotion& b) {
  const BodyRegion ra = a.body_region(), rb = b.body_region();
  const bool a_upper = ra == BodyRegion::upper;
  const bool b_upper = rb == BodyRegion::upper;
  if (a_upper == b_upper) return false;
  const BodyRegion base = a_upper ? rb : ra;
  return base == BodyRegion::locomotion || base == BodyRegion::lower;
}

MotionSequence compose_motion(const MetaMotion& a, const MetaMotion& b,
                              Connector conn, const Skeleton& skeleton,
                              std::uint64_t noise_seed) {
  const std::uint64_t seed_a = Rng::hash_combine(noise_seed, 1);
  const std::uint64_t seed_b = Rng::hash_combine(noise_seed, 2);
  if (conn == Connector::then) {
    const MotionSequence ma = render_primitive(a, skeleton, seed_a);
    const MotionSequence mb = render_primitive(b, skeleton, seed_b);
    MotionSequence out;
    out.frames = ma.frames + mb.frames;
    out.feature_dim = ma.feature_dim;
    out.fps = ma.fps;
    out.data = ma.data;
    out.data.insert(out.data.end(), mb.data.begin(), mb.data.end());
    // Linear blend of the first seam frames of b toward a's final frame.
    for (int k = 0; k < kSeamBlendFrames && k < mb.frames; ++k) {
      const float w = static_cast<float>(k + 1) / kSeamBlendFrames;
      for (int d = 0; d < out.feature_dim; ++d)
        out.at(ma.frames + k, d) =
            (1.0f - w) * ma.at(ma.frames - 1, d) + w * mb.at(k, d);
    }
    return out;
  }
  if (conn == Connector::while_) {
    if (!while_compatible(a, b))
      throw std::invalid_argument(
          "compose: 'while' requires disjoint body regions (one upper-body "
          "primitive and one locomotion/lower primitive)");
    const bool a_is_upper = a.body_region() == BodyRegion::upper;
    MetaMotion base = a_is_upper ? b : a;
    MetaMotion upper = a_is_upper ? a : b;
    const int dur = std::max(base.duration_frames, upper.duration_frames);
    base.duration_frames = dur;
    upper.duration_frames = dur;
    MotionSequence mb = render_primitive(base, skeleton, a_is_upper ? seed_b : seed_a);
    const MotionSequence mu =
        render_primitive(upper, skeleton, a_is_upper ? seed_a : seed_b);
    // Arm channels come from the upper primitive, re-anchored to the base
    // body's chest so the arms stay attached.
    const int chest = 2;
    for (int t = 0; t < dur; ++t)
      for (int j : {4, 5}) {  // l_hand, r_hand
        mb.at(t, 2 * j) = mb.at(t, 2 * chest) + (mu.at(t, 2 * j) - mu.at(t, 2 * chest));
        mb.at(t, 2 * j + 1) =
            mb.at(t, 2 * chest + 1) + (mu.at(t, 2 * j + 1) - mu.at(t, 2 * chest + 1));
      }
    return mb;
  }
  throw std::invalid_argument("compose: connector must be 'then' or 'while'");
}

}  // namespace mogen::world
