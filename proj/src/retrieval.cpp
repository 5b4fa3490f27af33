#include "stcm/retrieval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>

#include "stcm/errors.hpp"

namespace stcm {

namespace {

RowMatrix<double> flat(const Tensor& t) {
  if (t.is_null() || t.rank() < 1) throw ShapeError("retrieval: empty feature tensor");
  return t.rows();
}

}  // namespace

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_distance: dimension mismatch");
  const Eigen::Map<const Eigen::VectorXd> va(a.data(), static_cast<Index>(a.size()));
  const Eigen::Map<const Eigen::VectorXd> vb(b.data(), static_cast<Index>(b.size()));
  const double na = va.norm(), nb = vb.norm();
  if (na == 0.0 && nb == 0.0) return 0.0;
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - va.dot(vb) / (na * nb);
}

std::vector<NeighborList> knn_cosine(const Tensor& queries, const Tensor& database, Index k,
                                     std::span<const Index> self_ids) {
  const RowMatrix<double> Q = flat(queries);
  const RowMatrix<double> D = flat(database);
  if (Q.cols() != D.cols()) {
    throw ShapeError("knn_cosine: query dim " + std::to_string(Q.cols()) + " vs database dim " + std::to_string(D.cols()));
  }
  if (!self_ids.empty() && static_cast<Index>(self_ids.size()) != Q.rows()) {
    throw ShapeError("knn_cosine: need one self id per query");
  }
  const Index m = D.rows();
  const Eigen::VectorXd q_norm = Q.rowwise().norm();
  const Eigen::VectorXd d_norm = D.rowwise().norm();

  std::vector<NeighborList> out(static_cast<std::size_t>(Q.rows()));
  std::vector<std::pair<double, Index>> cand;
  for (Index q = 0; q < Q.rows(); ++q) {
    const Index self = self_ids.empty() ? -1 : self_ids[q];
    const Index available = m - ((self >= 0 && self < m) ? 1 : 0);
    if (k < 1 || k > available) {
      throw ArgumentError("knn_cosine: k = " + std::to_string(k) + " but only " + std::to_string(available) +
                          " candidates");
    }
    NeighborList& nl = out[q];
    nl.query = q;
    cand.clear();
    for (Index j = 0; j < m; ++j) {
      if (j == self) continue;
      double dist;
      if (q_norm[q] == 0.0 || d_norm[j] == 0.0) {
        ++nl.zero_vector_pairs;
        dist = (q_norm[q] == 0.0 && d_norm[j] == 0.0) ? 0.0 : 1.0;
      } else {
        dist = 1.0 - Q.row(q).dot(D.row(j)) / (q_norm[q] * d_norm[j]);
      }
      cand.emplace_back(dist, j);
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (Index i = 0; i < k; ++i) {
      nl.ids.push_back(cand[i].second);
      nl.distances.push_back(cand[i].first);
    }
  }
  return out;
}

double pr_auc(const std::vector<PRPoint>& points) {
  if (points.empty()) return 0.0;
  double area = 0.0;
  double prev_r = 0.0, prev_p = points.front().precision;
  for (const PRPoint& pt : points) {
    area += (pt.recall - prev_r) * 0.5 * (pt.precision + prev_p);
    prev_r = pt.recall;
    prev_p = pt.precision;
  }
  return area;
}

namespace {

// Averages per-query hit counts into a curve. hits[q][k-1] = relevant among first k.
PRCurve average_curve(const std::vector<std::vector<Index>>& hits, const std::vector<Index>& relevant, Index k_max) {
  PRCurve curve;
  curve.k_max = k_max;
  curve.query_count = static_cast<Index>(hits.size());
  const double nq = static_cast<double>(hits.size());
  for (Index k = 1; k <= k_max; ++k) {
    double p = 0.0, r = 0.0;
    for (std::size_t q = 0; q < hits.size(); ++q) {
      const double h = static_cast<double>(hits[q][k - 1]);
      p += h / static_cast<double>(k);
      r += relevant[q] > 0 ? h / static_cast<double>(relevant[q]) : 0.0;
    }
    curve.points.push_back({k, r / nq, p / nq});
  }
  curve.auc = pr_auc(curve.points);
  return curve;
}

std::vector<Index> cumulative_hits(const NeighborList& nl, const std::function<bool(Index)>& relevant) {
  std::vector<Index> out;
  Index h = 0;
  for (Index id : nl.ids) {
    h += relevant(id) ? 1 : 0;
    out.push_back(h);
  }
  return out;
}

}  // namespace

PRCurve temporal_pr(const Tensor& features, const SceneIndex& scenes, Index k_max) {
  if (scenes.scenes.empty()) throw DataError("temporal_pr: empty scene index");
  if (k_max < 1) throw ArgumentError("temporal_pr: k_max must be >= 1");
  const Index n = features.extent(0);
  scenes.validate(n, 2);
  if (n < 2) throw DataError("temporal_pr: need at least 2 frames");
  k_max = std::min(k_max, n - 1);

  std::vector<Index> query_ids;
  for (const Scene& s : scenes.scenes) query_ids.push_back(s.middle());
  const Tensor queries = gather_rows(features, query_ids);
  const auto lists = knn_cosine(queries, features, k_max, query_ids);

  std::vector<std::vector<Index>> hits;
  std::vector<Index> relevant;
  for (std::size_t q = 0; q < lists.size(); ++q) {
    const Scene& s = scenes.scenes[q];
    hits.push_back(cumulative_hits(lists[q], [&](Index id) { return id >= s.start && id < s.end(); }));
    relevant.push_back(s.length - 1);
  }
  return average_curve(hits, relevant, k_max);
}

PRCurve class_pr(const Tensor& test_features, const std::vector<int>& test_labels, const Tensor& train_features,
                 const std::vector<int>& train_labels, Index k_max) {
  if (static_cast<Index>(test_labels.size()) != test_features.extent(0) ||
      static_cast<Index>(train_labels.size()) != train_features.extent(0)) {
    throw DataError("class_pr: labels must cover every feature row");
  }
  if (k_max < 1) throw ArgumentError("class_pr: k_max must be >= 1");
  k_max = std::min(k_max, train_features.extent(0));
  std::map<int, Index> per_class;
  for (int l : train_labels) ++per_class[l];
  const auto lists = knn_cosine(test_features, train_features, k_max);
  std::vector<std::vector<Index>> hits;
  std::vector<Index> relevant;
  for (std::size_t q = 0; q < lists.size(); ++q) {
    const int label = test_labels[q];
    hits.push_back(cumulative_hits(lists[q], [&](Index id) { return train_labels[id] == label; }));
    relevant.push_back(per_class.count(label) ? per_class[label] : 0);
  }
  return average_curve(hits, relevant, k_max);
}

PixelBaselines pixel_baselines(const Tensor& frames, const Tensor& whitened_frames, const SceneIndex& scenes,
                               Index k_max) {
  return {temporal_pr(frames, scenes, k_max), temporal_pr(whitened_frames, scenes, k_max)};
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";  // integral values keep a decimal point
  return s;
}

void write_pr_csv(std::ostream& out, const PRCurve& curve) {
  out << "k,recall,precision\n";
  for (const PRPoint& p : curve.points) {
    out << p.k << ',' << format_number(p.recall) << ',' << format_number(p.precision) << '\n';
  }
  out << "# auc = " << format_number(curve.auc) << '\n';
}

void write_pr_csv(const std::filesystem::path& path, const PRCurve& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_pr_csv(out, curve);
}

}  // namespace stcm
