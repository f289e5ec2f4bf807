#pragma once

// Finite-difference suites behind the grad-check command: primitive ops at
// 1e-3, attention mechanisms / losses / the end-to-end adversarial path at
// 1e-2.

#include <string>
#include <vector>

#include "tfca/tensor.hpp"

namespace tfca {

struct CheckRow {
  std::string name;
  double err = 0.0;
  double tol = 0.0;
  bool pass = false;
};

std::vector<CheckRow> grad_check_tensor(uint64_t seed);
std::vector<CheckRow> grad_check_attention(uint64_t seed);
std::vector<CheckRow> grad_check_losses(uint64_t seed);
std::vector<CheckRow> grad_check_end2end(uint64_t seed);

// scope: tensor | attention | losses | end2end | all
std::vector<CheckRow> grad_check_scope(const std::string& scope, uint64_t seed);

}  // namespace tfca
