// Pools a toy feature map with GAP and with GSP. Three of the ten features
// sit near the single prototype, the rest are background; GSP should weight
// the first three and ignore the others, GAP averages everything.
//
//   ./pooling_demo [mu]

#include <cstdio>
#include <cstdlib>

#include "gsp/gsp.hpp"

int main(int argc, char** argv) {
  gsp::TransportConfig cfg;
  cfg.mu = argc > 1 ? std::atof(argv[1]) : 0.3;
  cfg.epsilon = 20.0;

  gsp::FeatureSet feats(10, 2);
  for (std::size_t j = 0; j < 10; ++j) {
    const bool fg = j < 3;
    feats(j, 0) = fg ? 0.8 + 0.05 * static_cast<double>(j) : -0.4;
    feats(j, 1) = fg ? 0.1 : 0.2 * static_cast<double>(j % 3) - 0.2;
  }
  const gsp::PrototypeBank protos{{0.85, 0.1}};

  const auto out = gsp::gsp_forward(feats, protos, cfg);
  const gsp::Vector w = gsp::pooling_weights(out.cache.solution);
  const gsp::Vector avg = gsp::gap(feats);

  std::printf("mu = %.2f\n\nfeature      x       y   weight\n", cfg.mu);
  for (std::size_t j = 0; j < 10; ++j)
    std::printf("%7zu %6.2f  %6.2f   %.4f\n", j, feats(j, 0), feats(j, 1), w[j]);
  std::printf("\nGAP  (%.4f, %.4f)\nGSP  (%.4f, %.4f)\n", avg[0], avg[1], out.pooled[0], out.pooled[1]);
  return 0;
}
