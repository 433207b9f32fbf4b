#pragma once

// Kinematic rendering of motion primitives and the two composition rules
// (temporal "then" with a seam blend, channel-merging "while").

#include <cstdint>
#include <utility>

#include "mogen/synthworld/motion.hpp"

namespace mogen::world {

// Feature layout: [x0,y0, x1,y1, ..., x7,y7, root_vx, root_vy].
inline int feature_dim(const Skeleton& s) { return 2 * s.joint_count + 2; }

// Deterministic trajectory for one primitive: sinusoidal limb phases and a
// parameterized root velocity, plus seeded Gaussian jitter on the non-root
// joints (sigma = 0.01 of each bone's length).
MotionSequence render_primitive(const MetaMotion& meta, const Skeleton& skeleton,
                                std::uint64_t noise_seed);

// True when `while` may combine the two primitives: exactly one drives the
// upper body and the other the locomotion/lower-body channels.
bool while_compatible(const MetaMotion& a, const MetaMotion& b);

// Motion half of compose(); the text half lives in the grammar. Rejects
// `while` for overlapping body regions.
MotionSequence compose_motion(const MetaMotion& a, const MetaMotion& b,
                              Connector conn, const Skeleton& skeleton,
                              std::uint64_t noise_seed);

inline constexpr int kSeamBlendFrames = 4;

}  // namespace mogen::world
