// Scratch probe: longer reversibility sequences around the candidate shapes.
#include <cstdio>

#include "bht/protocols.hpp"

using namespace bht;

int main() {
  for (double tf : {0.25, 0.4, 0.45, 0.5}) {
    ReversibilityOptions opt;
    opt.n_pairs_max = 6;
    opt.shots = 0;
    opt.tau_fraction = tf;
    const ProtocolResult res = run_reversibility(opt);
    std::printf("tau %.2f  eps %.6f  F:", tf, res.scalars.at("epsilon_rev"));
    for (const auto& row : res.results.rows) std::printf(" %.4f", row[1]);
    std::printf("\n");
  }
  return 0;
}
