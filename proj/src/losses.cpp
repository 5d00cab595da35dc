#include "motioncode/losses.hpp"

#include <cmath>

#include "motioncode/errors.hpp"
#include "motioncode/ops.hpp"

namespace motioncode {

void LossWeights::validate() const {
  if (!(alpha >= 0) || !(beta >= 0) || !(gamma >= 0)) throw ValidationError("loss weights must be >= 0");
}

namespace {

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.rank() != 2 || a.dims() != b.dims()) {
    throw InvalidArgument(std::string(what) + ": shape mismatch " + shape_string(a.dims()) + " vs " +
                          shape_string(b.dims()));
  }
}

template <typename T>
Tensor<T> frame_difference(Tape<T>& tape, const Tensor<T>& x) {
  const std::size_t n = x.dim(0);
  return ops::sub(tape, ops::slice_rows(tape, x, 1, n), ops::slice_rows(tape, x, 0, n - 1));
}

}  // namespace

template <typename T>
Tensor<T> position_loss(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& mean_output) {
  require_same(input, mean_output, "position_loss");
  return ops::sum(tape, ops::square(tape, ops::sub(tape, input, mean_output)));
}

template <typename T>
Tensor<T> velocity_loss(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& output) {
  require_same(input, output, "velocity_loss");
  if (input.dim(0) < 2) throw InvalidArgument("velocity_loss: need at least 2 frames");
  auto diff = ops::sub(tape, frame_difference(tape, input), frame_difference(tape, output));
  return ops::sum(tape, ops::square(tape, diff));
}

template <typename T>
Tensor<T> vq_loss(Tape<T>& tape, const Tensor<T>& z_e, const Tensor<T>& z_q, double beta) {
  require_same(z_e, z_q, "vq_loss");
  auto pull_encoder = ops::sum(tape, ops::square(tape, ops::sub(tape, ops::detach(z_q), z_e)));
  auto pull_codes = ops::sum(tape, ops::square(tape, ops::sub(tape, z_q, ops::detach(z_e))));
  return ops::add(tape, pull_encoder, ops::scale(tape, pull_codes, static_cast<T>(beta)));
}

template <typename T>
Tensor<T> tv_loss(Tape<T>& tape, const Tensor<T>& z_q, double gamma) {
  if (z_q.rank() != 2) throw InvalidArgument("tv_loss: expected frames x D");
  if (z_q.dim(0) < 2) throw InvalidArgument("tv_loss: need at least 2 frames");
  return ops::scale(tape, ops::sum(tape, ops::abs(tape, frame_difference(tape, z_q))), static_cast<T>(gamma));
}

template <typename T>
LossReport<T> total_loss(Tape<T>& tape, std::span<const LossStreams<T>> batch, const LossWeights& weights) {
  weights.validate();
  if (batch.empty()) throw InvalidArgument("total_loss: empty batch");
  LossReport<T> report;
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  Tensor<T> total;
  for (const auto& s : batch) {
    const double inv_frames = 1.0 / static_cast<double>(s.input.dim(0));
    auto lp = position_loss(tape, s.input, s.mean_output);
    auto lv = velocity_loss(tape, s.input, s.output);
    auto lvc = vq_loss(tape, s.z_e, s.z_q, weights.beta);
    auto ltv = tv_loss(tape, s.z_tv, weights.gamma);
    auto sequence = ops::add(tape, ops::scale(tape, ops::add(tape, lp, lv), static_cast<T>(weights.alpha)),
                             ops::add(tape, lvc, ltv));
    sequence = ops::scale(tape, sequence, static_cast<T>(inv_frames * inv_batch));
    total = total.defined() ? ops::add(tape, total, sequence) : sequence;

    const double w = inv_frames * inv_batch;
    report.position += w * static_cast<double>(lp.item());
    report.velocity += w * static_cast<double>(lv.item());
    report.vq += w * static_cast<double>(lvc.item());
    report.tv += w * static_cast<double>(ltv.item());
  }
  report.total = total;
  report.value = static_cast<double>(total.item());
  return report;
}

#define MOTIONCODE_INSTANTIATE_LOSSES(T)                                                   \
  template Tensor<T> position_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> velocity_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> vq_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&, double);        \
  template Tensor<T> tv_loss(Tape<T>&, const Tensor<T>&, double);                          \
  template LossReport<T> total_loss(Tape<T>&, std::span<const LossStreams<T>>, const LossWeights&);

MOTIONCODE_INSTANTIATE_LOSSES(float)
MOTIONCODE_INSTANTIATE_LOSSES(double)

#undef MOTIONCODE_INSTANTIATE_LOSSES

}  // namespace motioncode
