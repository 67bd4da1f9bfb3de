#include "slqr/leslie.hpp"

#include <cmath>
#include <sstream>

#include "slqr/errors.hpp"

namespace slqr {

void LeslieParams::validate(bool nominal) const {
  if (fecundity.empty()) throw ValidationError("leslie: at least one age class is required");
  if (survival.size() + 1 != fecundity.size()) {
    throw ValidationError("leslie: need n fecundities and n-1 survival rates, got " +
                          std::to_string(fecundity.size()) + " and " + std::to_string(survival.size()));
  }
  for (std::size_t i = 0; i < fecundity.size(); ++i) {
    if (!std::isfinite(fecundity[i]) || fecundity[i] < 0.0) {
      throw ValidationError("leslie: fecundity[" + std::to_string(i) + "] must be finite and >= 0");
    }
  }
  for (std::size_t i = 0; i < survival.size(); ++i) {
    if (!std::isfinite(survival[i])) {
      throw ValidationError("leslie: survival[" + std::to_string(i) + "] is not finite");
    }
    if (nominal && !(survival[i] > 0.0 && survival[i] < 1.0)) {
      throw ValidationError("leslie: survival[" + std::to_string(i) + "] must lie in (0,1)");
    }
  }
}

UncertaintySpec UncertaintySpec::uniform(Index count, double lo, double hi) {
  return {std::vector<double>(static_cast<std::size_t>(count), lo),
          std::vector<double>(static_cast<std::size_t>(count), hi)};
}

void UncertaintySpec::validate(Index survival_count) const {
  if (static_cast<Index>(lower.size()) != survival_count ||
      static_cast<Index>(upper.size()) != survival_count) {
    throw ValidationError("uncertainty: bounds must have one entry per survival rate");
  }
  for (std::size_t i = 0; i < lower.size(); ++i) {
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || lower[i] > upper[i]) {
      throw ValidationError("uncertainty: bound " + std::to_string(i) + " needs lower <= upper");
    }
  }
}

Mat leslie_matrix(const LeslieParams& params) {
  params.validate(false);
  const Index n = params.n();
  Mat f = Mat::Zero(n, n);
  for (Index j = 0; j < n; ++j) f(0, j) = params.fecundity[static_cast<std::size_t>(j)];
  for (Index i = 0; i + 1 < n; ++i) f(i + 1, i) = params.survival[static_cast<std::size_t>(i)];
  return f;
}

LeslieParams sample_random_leslie(Rng& rng, Index n, Range fecundity, Range survival) {
  if (n < 1) throw ValidationError("sample_random_leslie: n must be positive");
  if (fecundity.lo > fecundity.hi || survival.lo > survival.hi) {
    throw ValidationError("sample_random_leslie: empty range");
  }
  LeslieParams p;
  p.fecundity.resize(static_cast<std::size_t>(n));
  p.survival.resize(static_cast<std::size_t>(n - 1));
  for (auto& v : p.fecundity) v = rng.uniform(fecundity.lo, fecundity.hi);
  for (auto& k : p.survival) k = rng.uniform(survival.lo, survival.hi);
  return p;
}

ScenarioSet sample_scenarios(const LeslieParams& nominal, const UncertaintySpec& spec, int count,
                             Rng& rng, const Mat& G, const Vec& x0) {
  nominal.validate(true);
  spec.validate(static_cast<Index>(nominal.survival.size()));
  if (count < 1) throw ValidationError("sample_scenarios: need at least one scenario");
  const Index n = nominal.n();

  ScenarioSet set;
  set.G = G.size() == 0 ? Mat(Mat::Identity(n, n)) : G;
  set.x0 = x0.size() == 0 ? Vec(Vec::Zero(n)) : x0;
  set.provenance.seed = rng.seed();
  set.provenance.delta_lower = spec.lower;
  set.provenance.delta_upper = spec.upper;
  set.F.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    LeslieParams p = nominal;
    for (std::size_t i = 0; i < p.survival.size(); ++i) {
      p.survival[i] += rng.uniform(spec.lower[i], spec.upper[i]);
      if (!(p.survival[i] > 0.0 && p.survival[i] < 1.0)) {
        std::ostringstream msg;
        msg << "scenario " << s << ": survival[" << i << "] = " << p.survival[i] << " outside (0,1)";
        set.provenance.warnings.push_back(msg.str());
      }
    }
    set.F.push_back(leslie_matrix(p));
  }
  return set;
}

}  // namespace slqr
