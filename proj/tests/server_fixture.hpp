#pragma once

#include "embgeo/spectral.hpp"
#include "embgeo/synth.hpp"
#include "embgeo/tool_server.hpp"

#include <numeric>

namespace embgeo::testing {

// Small patchwork world with a fitted dictionary, split into west/east regions.
struct ToolWorld {
  EmbeddingDataset ds;
  std::unique_ptr<KnnIndex> index;
  DimensionDictionary dims;
  GeometricDictionary dict;
  Gazetteer gazetteer;
  std::vector<RegionSpec> regions;
  FeatureConfig config;

  explicit ToolWorld(std::size_t n = 2000, std::size_t D = 16, std::uint64_t seed = 7) {
    ManifoldSpec spec;
    spec.kind = ManifoldKind::heterogeneous_patchwork;
    spec.D = D;
    spec.n = n;
    spec.seed = seed;
    spec.center_spread = 0.5;
    spec.patches = equal_patches(4, {2, 4});
    ds = zscore_covariates(attach_patch_properties(generate_manifold(spec), 3, 0.05, seed + 1).dataset);
    index = std::make_unique<KnnIndex>(ds);
    std::vector<DimensionEntry> entries;
    for (std::size_t d = 0; d < D; ++d) {
      entries.push_back({d, all_categories()[d % all_categories().size()], {"v" + std::to_string(d)}, 0.5});
    }
    dims = DimensionDictionary(entries, D);
    regions = {{"west", 0.0, 1.0, 0.0, 0.5}, {"east", 0.0, 1.0, 0.5, 1.0}};

    config.global_pc1 = eigendecompose(covariance_matrix(ds)).eigenvectors.col(0);
    config.tangent_dim = 4;
    FeatureExtractor fx(ds, *index, config);
    const auto probes = sample_rows(ds.size(), 300, seed + 2);
    const auto geo = fx.compute_rows(probes);
    const auto coh = retrieval_coherence(ds, *index, probes);
    std::vector<ProbeProfile> profiles;
    Matrix f(static_cast<Eigen::Index>(probes.size()), 5);
    Vector y(static_cast<Eigen::Index>(probes.size()));
    std::size_t m = 0;
    for (std::size_t i = 0; i < probes.size(); ++i) {
      ProbeProfile p;
      p.row = probes[i];
      p.coherence = coh[i].mean;
      p.local_id = geo[i].features[0];
      p.pc1 = geo[i].pc1;
      p.features = geo[i].features;
      p.features_valid = geo[i].complete();
      profiles.push_back(p);
      if (p.features_valid) {
        f.row(static_cast<Eigen::Index>(m)) = geo[i].feature_vector().transpose();
        y[static_cast<Eigen::Index>(m)] = p.coherence;
        ++m;
      }
    }
    auto model = fit_confidence_model(f.topRows(static_cast<Eigen::Index>(m)), y.head(static_cast<Eigen::Index>(m)),
                                      0.2, seed + 3);
    dict = build_geometric_dictionary(regional_profiles(ds, profiles, regions), std::move(model),
                                      dimension_importance(ds, profiles, regions), regions,
                                      {{"dataset_hash", ds.content_hash()}, {"feature_config", config.to_json()}});
    gazetteer = parse_gazetteer("name,lat,lon\nSpringfield,0.25,0.25\nShelbyville,0.75,0.75\nOgdenville,0.5,0.1\n");
  }

  ToolContext context() const { return {&ds, index.get(), &dims, &dict, &gazetteer}; }
};

}  // namespace embgeo::testing
