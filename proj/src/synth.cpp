#include "fedinf/synth.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "fedinf/rng.hpp"

namespace fedinf {

void validate_synth_spec(const SyntheticSpec& spec) {
  if (spec.n < 1) throw std::invalid_argument("synth: n must be >= 1");
  if (spec.k < 2) throw std::invalid_argument("synth: k must be >= 2");
  if (spec.count < 1) throw std::invalid_argument("synth: count must be >= 1");
  if (!(spec.alpha > 0.0))
    throw std::invalid_argument("synth: alpha must be > 0");
  if (!(spec.temperature > 0.0))
    throw std::invalid_argument("synth: temperature must be > 0");
  if (spec.noise < 0.0) throw std::invalid_argument("synth: noise must be >= 0");
  if (spec.common_noise < 0.0)
    throw std::invalid_argument("synth: common_noise must be >= 0");
}

SynthData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  validate_synth_spec(spec);
  const std::size_t n = std::size_t(spec.n), k = std::size_t(spec.k);

  RngStream class_rng = RngStream::derive(seed, "synth/classes");
  RngStream exposure_rng = RngStream::derive(seed, "synth/exposures");
  RngStream label_rng = RngStream::derive(seed, "synth/labels");
  RngStream noise_rng = RngStream::derive(seed, "synth/noise");

  SynthData out;

  // Class geometry: random unit embeddings define a similarity structure
  // that both the confusion term and the similarity file share.
  const std::size_t embed_dim = 8;
  Mat embed(k, embed_dim);
  for (std::size_t c = 0; c < k; ++c) {
    double norm2 = 0.0;
    for (std::size_t d = 0; d < embed_dim; ++d) {
      embed.at(c, d) = class_rng.normal();
      norm2 += embed.at(c, d) * embed.at(c, d);
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t d = 0; d < embed_dim; ++d) embed.at(c, d) *= inv;
  }
  out.similarity = Mat(k, k);
  for (std::size_t a = 0; a < k; ++a) {
    out.similarity.at(a, a) = 1.0;
    for (std::size_t b = a + 1; b < k; ++b) {
      double cosab = 0.0;
      for (std::size_t d = 0; d < embed_dim; ++d)
        cosab += embed.at(a, d) * embed.at(b, d);
      const double sim = 0.5 * (1.0 + cosab);
      out.similarity.at(a, b) = sim;
      out.similarity.at(b, a) = sim;
    }
  }

  out.exposures = Mat(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> w = exposure_rng.dirichlet(spec.alpha, k);
    for (std::size_t c = 0; c < k; ++c) out.exposures.at(i, c) = w[c];
  }

  out.panels.reserve(std::size_t(spec.count));
  std::vector<double> z(k);
  std::vector<double> shared(k);
  char id[32];
  for (int t = 0; t < spec.count; ++t) {
    ProbitPanel panel;
    panel.probits = Mat(n, k);
    panel.label = label_rng.below_int(spec.k);
    std::snprintf(id, sizeof id, "synth-%06d", t);
    panel.input_id = id;
    const std::size_t y = std::size_t(panel.label);
    for (std::size_t c = 0; c < k; ++c)
      shared[c] = spec.common_noise * noise_rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
      const double skill =
          spec.signal_base + spec.signal_exposure * out.exposures.at(i, y) * double(k);
      for (std::size_t c = 0; c < k; ++c) {
        double score = (c == y) ? skill : 0.0;
        score += spec.similarity_leak * out.similarity.at(y, c) *
                 (c == y ? 0.0 : 1.0);
        score += shared[c] + spec.noise * noise_rng.normal();
        z[c] = score / spec.temperature;
      }
      const ProbitVector h = project_softmax(z);
      for (std::size_t c = 0; c < k; ++c) panel.probits.at(i, c) = h.p[c];
    }
    out.panels.push_back(std::move(panel));
  }
  return out;
}

}  // namespace fedinf
