// Binary parameter container: a 16-byte header ("RDSRCKPT", u32 version,
// u32 network tag), a u32 tensor count, then per tensor u32 rows, u32 cols and
// rows*cols little-endian float64 values in row-major order.
#ifndef RDSR_CHECKPOINT_HPP
#define RDSR_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "rdsr/nn.hpp"

namespace rdsr {

enum class NetworkTag : std::uint32_t {
  Downsampler = 1,
  Encoder = 2,
  Upscaler = 3,
  Discriminator = 4,
  Baseline = 5,
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetworkTag tag = NetworkTag::Baseline;
  std::vector<Matrix<double>> tensors;
};

void write_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

template <typename Scalar>
Checkpoint make_checkpoint(NetworkTag tag, const nn::ParamList<Scalar>& params) {
  Checkpoint ck;
  ck.tag = tag;
  for (auto* p : params) ck.tensors.push_back(p->value.template cast<double>());
  return ck;
}

/// Copies tensors into `params`; the tag and every shape must match.
template <typename Scalar>
void restore_checkpoint(const Checkpoint& ck, NetworkTag expected, const nn::ParamList<Scalar>& params) {
  if (ck.tag != expected) throw DataError("checkpoint holds a different network type");
  if (ck.tensors.size() != params.size()) throw DataError("checkpoint tensor count mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    if (ck.tensors[i].rows() != params[i]->value.rows() || ck.tensors[i].cols() != params[i]->value.cols())
      throw DataError("checkpoint tensor shape mismatch");
    params[i]->value = ck.tensors[i].template cast<Scalar>();
  }
}

}  // namespace rdsr

#endif  // RDSR_CHECKPOINT_HPP
