// Designs the standard patch for 5.4 GHz, rasterizes it as an all-metal pixel
// grid, simulates the element pair and compares the S11 dip with the
// closed-form cavity resonance.
//
//   patch_resonance [rows]      rows of pixels along L (default 8)

#include <cstdio>
#include <cstdlib>

#include "pixant/bench.hpp"
#include "pixant/emcore.hpp"
#include "pixant/sparam.hpp"

int main(int argc, char** argv) {
  using namespace pixant;
  const int rows = argc > 1 ? std::atoi(argv[1]) : 8;
  if (rows < 2) {
    std::fprintf(stderr, "rows must be >= 2\n");
    return 2;
  }
  const MaterialStack stack{};
  const PatchDims d = design_standard_patch(kDesignFrequency, stack.eps_r, stack.h);
  const double pitch = d.L / rows;
  int cols = static_cast<int>(std::lround(d.W / pitch));
  if (cols % 2 == 0) ++cols;  // odd, so the feed pixel is centred
  const PixelGrid g = make_grid(cols, rows, true, pitch);
  const double f_model = hammerstad_resonance(cols * pitch, rows * pitch, stack.eps_r, stack.h);
  std::printf("patch W %.3f mm  L %.3f mm  -> %dx%d pixels of %.3f mm\n", d.W * 1e3, d.L * 1e3, cols, rows,
              pitch * 1e3);

  const Scene s = build_scene(g, g, 2 * pitch, stack, 2);
  std::printf("lattice %d x %d x %d cells\n", s.cells_x, s.cells_y, s.cells_z);
  const TimeSeries r = run_fdtd(s, 1, 200000, Pulse{});
  std::printf("%zu steps, trailing ratio %.2e\n", r.steps, r.trailing_ratio);
  const SParamSet sp = extract_sparams({r, mirror_run(r)}, Band{}, 501);
  const Resonance res = resonance_min(sp, 1);
  std::printf("FDTD S11 minimum  %.4f GHz (%.2f dB)\n", res.freq / 1e9, res.db);
  std::printf("cavity model      %.4f GHz\n", f_model / 1e9);
  std::printf("deviation         %+.2f %%\n", 100.0 * (res.freq - f_model) / f_model);
  std::printf("S21 at 5.4 GHz    %.2f dB\n", s21_db(sp, kDesignFrequency));
  return 0;
}
