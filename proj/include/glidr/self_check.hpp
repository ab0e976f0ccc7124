#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Randomized consistency checks shared by the `check` command and the acceptance runner.
namespace glidr::self_check {

struct Outcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Analytic vs. central-difference gradients on random instances (<=20 entities,
/// <=4 relations, N in 3..5, r_max in 2..3).
Outcome gradients(std::size_t instances, std::uint64_t seed, double tol = 1e-3);

/// run_hard vs. brute force on random rules whose active slots form a forest.
Outcome acyclic_equivalence(std::size_t instances, std::uint64_t seed);

/// Random rules with cycles allowed: no wipeout on an entailed query, and run_hard reaches
/// the same domains as classical AC-3.
Outcome cyclic_soundness(std::size_t instances, std::uint64_t seed);

/// The locally consistent but unsatisfiable fixture: propagation entails, the oracle does not.
Outcome counterexample_fixture();

/// One-hot chain rules scored by the soft engine vs. Boolean path composition.
Outcome chain_subsumption(std::size_t instances, std::uint64_t seed);

std::vector<Outcome> run_all(std::uint64_t seed, bool quick = false);

}  // namespace glidr::self_check
