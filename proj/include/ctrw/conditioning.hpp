#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <vector>

#include "ctrw/error.hpp"

namespace ctrw {

// Flattened model-output vector (q tokens x c channels). The toolkit never
// instantiates a denoiser; these are opaque values at the contract boundary.
using NoisePrediction = Eigen::VectorXd;

struct GuidanceWeights {
  double w_text = 7.5;
  double w_cam = 8.0;
};

inline void validate_guidance_weights(const GuidanceWeights& w) {
  if (!(w.w_text >= 0.0) || !(w.w_cam >= 0.0) || !std::isfinite(w.w_text) ||
      !std::isfinite(w.w_cam)) {
    throw ValidationError("guidance weights must be finite and >= 0");
  }
}

// Two-axis classifier-free guidance: extrapolate from the fully unconditional
// prediction along the text axis, then along the camera axis:
//   out = eps_uncond + w_text*(eps_text - eps_uncond) + w_cam*(eps_full - eps_text)
// Both weights at 1 telescope to the fully conditioned prediction, so that
// case returns eps_full directly (real samplers skip the extra evaluations
// there as well).
inline NoisePrediction combine_guidance(const NoisePrediction& eps_uncond,
                                        const NoisePrediction& eps_text,
                                        const NoisePrediction& eps_full,
                                        const GuidanceWeights& w) {
  validate_guidance_weights(w);
  if (eps_uncond.size() != eps_text.size() || eps_text.size() != eps_full.size()) {
    throw ValidationError("combine_guidance: length mismatch");
  }
  if (!eps_uncond.allFinite() || !eps_text.allFinite() || !eps_full.allFinite()) {
    throw ValidationError("combine_guidance: non-finite inputs");
  }
  if (w.w_text == 1.0 && w.w_cam == 1.0) return eps_full;

  NoisePrediction out(eps_uncond.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out[i] = eps_uncond[i] + w.w_text * (eps_text[i] - eps_uncond[i]) +
             w.w_cam * (eps_full[i] - eps_text[i]);
  }
  return out;
}

struct ClipLayout {
  Eigen::Index q_prev = 0;  // conditioning-token count
  Eigen::Index q_cur = 0;   // generated-token count
  Eigen::Index c = 0;       // channel count (without the mask channel)
};

// Token sequence for clip extension: the previous clip's clean tokens
// followed by the current clip's noised tokens, with an extra mask channel
// (1 on conditioning rows, 0 on generated rows). loss_mask is true exactly on
// the generated rows.
struct ExtensionInput {
  Eigen::MatrixXd tokens;       // (q_prev+q_cur) x (c+1)
  std::vector<bool> loss_mask;  // length q_prev+q_cur
  ClipLayout layout;

  Eigen::MatrixXd prev_tokens() const {
    return tokens.topLeftCorner(layout.q_prev, layout.c);
  }
  Eigen::MatrixXd cur_tokens() const {
    return tokens.bottomLeftCorner(layout.q_cur, layout.c);
  }
};

inline ExtensionInput build_extension_input(const Eigen::MatrixXd& prev_tokens,
                                            const Eigen::MatrixXd& cur_noised_tokens) {
  if (cur_noised_tokens.rows() < 1) {
    throw ValidationError("build_extension_input: current clip must have tokens");
  }
  if (cur_noised_tokens.cols() < 1) {
    throw ValidationError("build_extension_input: channel count must be >= 1");
  }
  if (prev_tokens.rows() > 0 && prev_tokens.cols() != cur_noised_tokens.cols()) {
    throw ValidationError("build_extension_input: channel mismatch");
  }

  ExtensionInput input;
  input.layout = ClipLayout{prev_tokens.rows(), cur_noised_tokens.rows(),
                            cur_noised_tokens.cols()};
  const Eigen::Index q = input.layout.q_prev + input.layout.q_cur;
  input.tokens.resize(q, input.layout.c + 1);
  if (input.layout.q_prev > 0) {
    input.tokens.topLeftCorner(input.layout.q_prev, input.layout.c) = prev_tokens;
  }
  input.tokens.bottomLeftCorner(input.layout.q_cur, input.layout.c) = cur_noised_tokens;
  input.tokens.col(input.layout.c).setZero();
  input.tokens.col(input.layout.c).head(input.layout.q_prev).setOnes();

  input.loss_mask.assign(static_cast<std::size_t>(q), false);
  for (Eigen::Index i = input.layout.q_prev; i < q; ++i) {
    input.loss_mask[static_cast<std::size_t>(i)] = true;
  }
  return input;
}

// Element-wise fusion of patchified camera features into visual features.
// The shape contract is the whole point: the camera patchify output must
// match the visual token grid exactly, and an all-zero camera input leaves
// the visual features untouched.
inline Eigen::MatrixXd fuse_camera_features(const Eigen::MatrixXd& visual,
                                            const Eigen::MatrixXd& camera) {
  if (visual.rows() != camera.rows() || visual.cols() != camera.cols()) {
    throw ValidationError("fuse_camera_features: shape mismatch (visual " +
                          std::to_string(visual.rows()) + "x" + std::to_string(visual.cols()) +
                          " vs camera " + std::to_string(camera.rows()) + "x" +
                          std::to_string(camera.cols()) + ")");
  }
  return visual + camera;
}

// Mean squared error restricted to tokens whose loss_mask is true. pred and
// target are flat (q tokens x c channels, token-major); entries on mask-false
// tokens never influence the result.
inline double masked_diffusion_loss(const NoisePrediction& pred,
                                    const NoisePrediction& target,
                                    const std::vector<bool>& loss_mask) {
  if (pred.size() != target.size()) {
    throw ValidationError("masked_diffusion_loss: length mismatch");
  }
  if (loss_mask.empty()) throw ValidationError("masked_diffusion_loss: empty mask");
  const Eigen::Index q = static_cast<Eigen::Index>(loss_mask.size());
  if (pred.size() % q != 0) {
    throw ValidationError("masked_diffusion_loss: prediction length not divisible by token count");
  }
  const Eigen::Index c = pred.size() / q;

  double sum = 0.0;
  Eigen::Index selected = 0;
  for (Eigen::Index token = 0; token < q; ++token) {
    if (!loss_mask[static_cast<std::size_t>(token)]) continue;
    ++selected;
    for (Eigen::Index k = 0; k < c; ++k) {
      const double d = pred[token * c + k] - target[token * c + k];
      sum += d * d;
    }
  }
  if (selected == 0) throw ValidationError("masked_diffusion_loss: no tokens selected by mask");
  return sum / static_cast<double>(selected * c);
}

struct ConditionFrameBounds {
  int min_frames = 5;
  int max_frames = 0;  // 50% of the clip's total frames
};

// Planner policy for how many clean frames of the previous clip may condition
// the next one: at least 5, at most half the total.
inline ConditionFrameBounds condition_frame_bounds(int total_frames) {
  if (total_frames < 1) throw ValidationError("condition_frame_bounds: total_frames must be >= 1");
  return ConditionFrameBounds{5, total_frames / 2};
}

inline void validate_condition_frames(int requested, int total_frames) {
  const ConditionFrameBounds bounds = condition_frame_bounds(total_frames);
  if (requested < bounds.min_frames || requested > bounds.max_frames) {
    throw ValidationError("condition frame count " + std::to_string(requested) +
                          " outside [" + std::to_string(bounds.min_frames) + ", " +
                          std::to_string(bounds.max_frames) + "] for " +
                          std::to_string(total_frames) + " frames");
  }
}

}  // namespace ctrw
