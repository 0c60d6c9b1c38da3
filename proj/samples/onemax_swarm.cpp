// Binary swarm on OneMax: cost is the number of zero bits. Prints the best
// cost per iteration for both transfer functions.

#include <algorithm>
#include <cstdio>

#include "pixant/optim.hpp"

int main() {
  using namespace pixant;
  const FunctionProblem onemax(64, [](const BitVector& b) {
    return static_cast<double>(std::count(b.begin(), b.end(), std::uint8_t{0}));
  });
  for (Transfer t : {Transfer::S_SHAPED, Transfer::V_SHAPED}) {
    SwarmConfig cfg;
    cfg.transfer = t;
    cfg.seed = 1;
    const OptResult r = optimize(onemax, cfg);
    std::printf("%s:", to_string(t));
    for (const auto& h : r.history)
      if (h.iter % 20 == 0) std::printf(" %g", h.gbest_cost);
    std::printf("  final %g (%zu distinct evaluations)\n", r.best.cost, static_cast<std::size_t>(r.evaluations));
  }
  return 0;
}
