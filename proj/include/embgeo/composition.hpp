#pragma once

#include "embgeo/probes.hpp"

#include <map>
#include <memory>
#include <mutex>

namespace embgeo {

enum class ShiftMethod {
  global_pc,
  local_pc,
  probe_global,
  probe_regional,
  probe_local,
  random,
  geographic_baseline
};

std::string_view shift_method_name(ShiftMethod m);
ShiftMethod parse_shift_method(std::string_view name);
const std::vector<ShiftMethod>& all_shift_methods();

struct ShiftOutcome {
  std::size_t source = 0;
  std::string property;
  ShiftMethod method = ShiftMethod::local_pc;
  double magnitude = 0.0;
  std::optional<std::size_t> retrieved;
  double target_change = std::numeric_limits<double>::quiet_NaN();  // global sigma units
  // Same change in units of the property's spread within the source neighborhood.
  double target_change_local = std::numeric_limits<double>::quiet_NaN();
  double non_target_deviation = std::numeric_limits<double>::quiet_NaN();
  double sigma_dir = 0.0;
  bool failed = false;
  std::string error;
};

struct TransferOutcome {
  std::size_t a = 0;
  std::size_t b = 0;
  std::string property;
  std::vector<std::size_t> components;
  Vector transferred;
  std::optional<std::size_t> retrieved;
  double target_error = std::numeric_limits<double>::quiet_NaN();
  double non_target_deviation = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string error;
};

enum class AnalogyMode { naive, tangent_projected };
std::string_view analogy_mode_name(AnalogyMode m);
AnalogyMode parse_analogy_mode(std::string_view name);

struct AnalogyOutcome {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t c = 0;
  std::string property;
  AnalogyMode mode = AnalogyMode::naive;
  std::optional<std::size_t> retrieved;
  double target_error = std::numeric_limits<double>::quiet_NaN();
  double non_target_deviation = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string error;
};

struct CompositionOptions {
  std::size_t k = 100;
  std::size_t top_p = 10;
  std::size_t transfer_components = 3;
  std::size_t tangent_dim = 10;
  std::size_t global_sample = 50000;
  double alpha = 1.0;
  // +1: x_c + (x_b - x_a), moving C toward B. -1: the printed x_a - x_b + x_c.
  int analogy_sign = 1;
  std::uint64_t seed = 0;
  int threads = 1;
};

/**
 * Shift / transfer / analogy experiments on one dataset. Outcomes are
 * expressed in units of each property's global standard deviation; only
 * non-constant covariates listed in `properties` are evaluated.
 */
class CompositionLab {
 public:
  CompositionLab(const EmbeddingDataset& ds, const KnnIndex& index, std::vector<std::string> properties,
                 std::vector<RegionSpec> regions = {}, CompositionOptions options = {});

  const std::vector<std::string>& properties() const { return properties_; }
  const CompositionOptions& options() const { return options_; }

  /// Unit direction for a method at a source, oriented to correlate positively
  /// with the property over the source neighborhood.
  Vector direction(std::size_t source, const std::string& property, ShiftMethod method) const;

  ShiftOutcome targeted_shift(std::size_t source, const std::string& property, ShiftMethod method,
                              double n) const;
  ShiftOutcome geographic_baseline(std::size_t source, const std::string& property, double n) const;
  TransferOutcome property_transfer(std::size_t a, std::size_t b, const std::string& property,
                                    std::optional<std::size_t> j = std::nullopt) const;
  AnalogyOutcome analogy(std::size_t a, std::size_t b, std::size_t c, const std::string& property,
                         AnalogyMode mode) const;

  /// Global-PC direction for a property (top_p PCs of a <= global_sample subsample).
  PcSelection global_pc(const std::string& property) const;
  const ProbeModel& global_probe(const std::string& property) const;

 private:
  struct Neighborhood {
    std::vector<std::size_t> rows;
    Matrix x;
    LocalPca pca;
  };

  std::size_t property_col(const std::string& property) const;
  std::shared_ptr<const Neighborhood> neighborhood(std::size_t source) const;
  Vector orient(Vector u, const Neighborhood& hood, std::size_t col) const;
  std::size_t retrieve(const Vector& point, std::optional<std::size_t> exclude) const;
  double non_target(std::size_t col, std::size_t reference, std::size_t retrieved) const;

  const EmbeddingDataset& ds_;
  const KnnIndex& index_;
  std::vector<std::string> properties_;
  std::vector<std::size_t> cols_;
  std::vector<RegionSpec> regions_;
  CompositionOptions options_;
  std::vector<std::size_t> global_rows_;
  EigenSummary global_eig_;
  Matrix global_x_;

  mutable std::mutex mutex_;
  mutable std::map<std::size_t, std::shared_ptr<const Neighborhood>> hoods_;
  mutable std::map<std::string, ProbeModel> global_probes_;
  mutable std::map<std::pair<std::size_t, std::string>, std::shared_ptr<const ProbeModel>> regional_probes_;
};

/// Fraction of outcomes with target change >= 0.5 n and non-target deviation < n.
double shift_precision(std::span<const ShiftOutcome> outcomes);

struct ShiftAggregate {
  ShiftMethod method = ShiftMethod::local_pc;
  double magnitude = 0.0;
  std::size_t count = 0;
  std::size_t failures = 0;
  double mean_target_change = 0.0;
  double mean_abs_target_change = 0.0;
  double mean_target_change_local = 0.0;
  double mean_non_target = 0.0;
  double precision = 0.0;
};

struct ExperimentSuite {
  std::vector<ShiftOutcome> outcomes;
  std::vector<ShiftAggregate> aggregates;
};

/// Full factorial over sources x properties x methods x magnitudes, in that nesting order.
ExperimentSuite experiment_suite(const CompositionLab& lab, std::span<const std::size_t> sources,
                                 const std::vector<std::string>& properties,
                                 const std::vector<ShiftMethod>& methods,
                                 const std::vector<double>& magnitudes);

std::vector<ShiftAggregate> aggregate_outcomes(std::span<const ShiftOutcome> outcomes);

}  // namespace embgeo
