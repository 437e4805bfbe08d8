#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lpvae/core/nn.hpp"

namespace lpvae {

// Little-endian named-tensor container ("LPVB"). One blob holds either model
// parameters or optimizer state; names are the lookup keys on load.
void write_blob(const std::string& path, const std::vector<std::pair<std::string, Tensor>>& entries);
std::vector<std::pair<std::string, Tensor>> read_blob(const std::string& path);

void save_params(const std::string& path, const nn::ParamList& params);
// Loads by name into existing parameter tensors; missing or shape-mismatched
// entries raise ContractError.
void load_params(const std::string& path, const nn::ParamList& params);

}  // namespace lpvae
