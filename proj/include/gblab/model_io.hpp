#pragma once

#include <optional>
#include <string>

#include "gblab/paradigms.hpp"
#include "gblab/trigger.hpp"

namespace gblab {

// JSON round trips for trained artifacts. Matrices serialize as nested row
// arrays; files carry a version tag and loaders validate shapes, so a partial
// or mismatched file fails loudly with the path in the message.

void save_model(const ModelBundle& model, const std::string& path);
ModelBundle load_model(const std::string& path);

// The repository file can embed the attacker's clean surrogate model, since
// evaluation-time trigger selection runs in its embedding space.
struct RepositoryFile {
  TriggerRepository repo;
  std::optional<ModelBundle> surrogate;
};

void save_repository(const TriggerRepository& repo, const ModelBundle* surrogate,
                     const std::string& path);
RepositoryFile load_repository(const std::string& path);

}  // namespace gblab
