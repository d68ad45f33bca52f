#pragma once

// Finite-difference suites over random tiny instances of every layer with a
// hand-written backward pass.

#include <cstdint>
#include <string>
#include <vector>

namespace sphdiff::gradcheck {

struct SuiteResult {
  std::string name;
  int instances = 0;
  double max_relative_error = 0.0;
  std::string worst_block;  // "instance k: block"
};

// Half the instances push some offsets deep into the clamp.
SuiteResult deform_conv_suite(int instances, std::uint64_t seed);
SuiteResult hint_block_suite(int instances, std::uint64_t seed);
// Numeric side evaluated with the stop-gradient targets held fixed; the
// alignment mode alternates between instances.
SuiteResult simsiam_suite(int instances, std::uint64_t seed);
SuiteResult eps_loss_suite(int instances, std::uint64_t seed);
// L_c of the whole toy model (hint block -> control encoder -> denoiser).
SuiteResult control_path_suite(int instances, std::uint64_t seed);

std::vector<SuiteResult> run_all_suites(int instances, std::uint64_t seed);

}  // namespace sphdiff::gradcheck
