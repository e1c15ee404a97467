#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "pmm/experiments/idx.hpp"
#include "pmm/mlp/mlp.hpp"
#include "pmm/numerics/rng.hpp"

namespace pmm::experiments {

struct Split {
  mlp::TrainSample train;
  mlp::TrainSample test;
  std::size_t excluded = 0;           // constant images dropped
  std::vector<std::string> warnings;
};

/// Two-digit task: label a → +1, b → −1. Images are flattened, centred and
/// rescaled onto the radius-√d_0 sphere; images that are constant (zero
/// after centring) are dropped with a warning. The subsample is a seeded
/// shuffle of the eligible images. Throws ErrorKind::insufficient_data when
/// too few images remain or the training split misses a class.
Split preprocess(const IdxDataset& ds, int digit_a, int digit_b, std::size_t m_train,
                 std::size_t m_test, RngStream& rng);

struct SynthSpec {
  std::size_t d0 = 16;
  std::size_t m_train = 100;
  std::size_t m_test = 500;
  std::size_t teacher_depth = 2;
  std::size_t teacher_width = 32;
};

struct SynthData {
  Split split;
  mlp::MlpNet teacher;
};

/// Inputs uniform on the radius-√d_0 sphere labelled by the sign of a random
/// scaled-relu teacher. Teachers whose positive fraction over all points
/// falls outside [0.4, 0.6] are redrawn; after 20 redraws the call throws
/// ErrorKind::balance_failure.
SynthData synth_teacher_data(const SynthSpec& spec, RngStream& rng);

}  // namespace pmm::experiments
