#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stcm/datasets.hpp"
#include "stcm/tensor.hpp"

namespace stcm {

struct NeighborList {
  Index query = 0;
  std::vector<Index> ids;         // ascending cosine distance, ties by lower database index
  std::vector<double> distances;
  Index zero_vector_pairs = 0;    // comparisons involving an all-zero vector
};

/// 1 - <a,b> / (|a| |b|); 1 when exactly one vector is zero, 0 when both are.
double cosine_distance(std::span<const double> a, std::span<const double> b);

/// Exact k nearest rows of `database` for each row of `queries` (both flattened to
/// [rows, dim]). When `self_ids` is non-empty, database row self_ids[q] is excluded from
/// query q's neighbors (-1 excludes nothing).
std::vector<NeighborList> knn_cosine(const Tensor& queries, const Tensor& database, Index k,
                                     std::span<const Index> self_ids = {});

struct PRPoint {
  Index k = 0;
  double recall = 0.0;
  double precision = 0.0;
};

struct PRCurve {
  std::vector<PRPoint> points;  // k = 1..k_max, averaged over queries
  double auc = 0.0;
  Index k_max = 0;
  Index query_count = 0;
};

/// Trapezoid area under (recall, precision), with the first point extended back to
/// recall 0 at its own precision.
double pr_auc(const std::vector<PRPoint>& points);

/// Temporal coherence: one query per scene (its middle frame, start + length/2), the
/// whole feature set minus the query as database, same-scene frames as relevant. Recall
/// divides by length - 1. `k_max` is clamped to N - 1.
PRCurve temporal_pr(const Tensor& features, const SceneIndex& scenes, Index k_max = 40);

/// Class-based precision: every test row queries the training rows; same-label rows are
/// relevant and recall divides by that label's training count. `k_max` is clamped to the
/// training set size.
PRCurve class_pr(const Tensor& test_features, const std::vector<int>& test_labels, const Tensor& train_features,
                 const std::vector<int>& train_labels, Index k_max = 40);

struct PixelBaselines {
  PRCurve pixel;
  PRCurve whitened;
};

/// temporal_pr on raw and on whitened frames, flattened.
PixelBaselines pixel_baselines(const Tensor& frames, const Tensor& whitened_frames, const SceneIndex& scenes,
                               Index k_max = 40);

/// CSV: "k,recall,precision" header, one row per k, then "# auc = <value>".
void write_pr_csv(std::ostream& out, const PRCurve& curve);
void write_pr_csv(const std::filesystem::path& path, const PRCurve& curve);

/// Shortest round-trip decimal form, as used in the CSV footer and CLI output.
std::string format_number(double v);

}  // namespace stcm
