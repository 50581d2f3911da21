#include "celltrack/events.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

namespace celltrack {

namespace fs = std::filesystem;

const std::vector<std::string>& migration_feature_names() {
  static const std::vector<std::string> names = {"center_distance", "d_major", "d_minor", "d_angle", "ecc_i",
                                                 "ecc_j", "overlap", "fit_i", "fit_j", "area_ratio"};
  return names;
}

const std::vector<std::string>& division_feature_names() {
  static const std::vector<std::string> names = {"area_sum_ratio", "area_asymmetry", "midpoint_offset",
                                                 "axis_angle", "daughter_spacing", "ecc_mother"};
  return names;
}

namespace {

// Angle between two undirected axes, in [0, pi/2].
double axis_difference(double t1, double t2) {
  double d = std::fmod(std::abs(t1 - t2), std::numbers::pi);
  return std::min(d, std::numbers::pi - d);
}

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

// log(1 + exp(-m)) without overflow.
double logistic_loss(double margin) {
  return margin > 0 ? std::log1p(std::exp(-margin)) : -margin + std::log1p(std::exp(margin));
}

}  // namespace

Eigen::VectorXd migration_features(const Ellipse& ei, const Ellipse& ej, double fit_i, double fit_j) {
  Eigen::VectorXd f(10);
  f << (ei.center - ej.center).norm(), std::abs(ei.a - ej.a), std::abs(ei.b - ej.b),
      axis_difference(ei.theta, ej.theta), eccentricity(ei), eccentricity(ej), ellipse_overlap(ei, ej), fit_i, fit_j,
      ej.area() / ei.area();
  return f;
}

Eigen::VectorXd division_features(const Ellipse& ej, const Ellipse& ek, const Ellipse& el) {
  const double ak = ek.area(), al = el.area();
  const Point2 axis = el.center - ek.center;
  const double axis_angle = axis.squaredNorm() > 0 ? axis_difference(std::atan2(axis.y(), axis.x()), ej.theta) : 0.0;
  Eigen::VectorXd f(6);
  f << (ak + al) / ej.area(), std::abs(ak - al) / std::max(ak, al), (0.5 * (ek.center + el.center) - ej.center).norm(),
      axis_angle, axis.norm() / (ek.a + el.a), eccentricity(ej);
  return f;
}

double GBTModel::score(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double s = base_score;
  for (const auto& st : stumps) s += x(st.feature) <= st.threshold ? st.left : st.right;
  return s;
}

GBTModel train_gbt(const Eigen::MatrixXd& X, std::span<const int> labels, const GBTParams& params,
                   std::vector<double>* loss_history) {
  const Eigen::Index n = X.rows(), d = X.cols();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw Error(ErrorCode::ConfigInvalid, "label count mismatch");
  if (params.rounds < 1 || params.depth != 1 || !(params.shrinkage > 0))
    throw Error(ErrorCode::ConfigInvalid, "boosting needs rounds >= 1, depth 1 and positive shrinkage");
  const long pos = std::count(labels.begin(), labels.end(), 1);
  const long neg = std::count(labels.begin(), labels.end(), -1);
  if (pos + neg != n) throw Error(ErrorCode::ConfigInvalid, "labels must be +1 or -1");
  if (pos == 0 || neg == 0) throw Error(ErrorCode::SingleClass, "training data holds a single class");
  if (!X.allFinite()) throw Error(ErrorCode::ConfigInvalid, "non-finite feature value");

  constexpr double lambda = 1e-6;
  GBTModel model;
  model.shrinkage = params.shrinkage;
  model.base_score = std::log(static_cast<double>(pos) / static_cast<double>(neg));
  Eigen::VectorXd y(n), F = Eigen::VectorXd::Constant(n, model.base_score);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = labels[static_cast<std::size_t>(i)];
  auto loss_of = [&](const Eigen::VectorXd& scores) {
    double l = 0;
    for (Eigen::Index i = 0; i < n; ++i) l += logistic_loss(y(i) * scores(i));
    return l;
  };
  double loss = loss_of(F);
  if (loss_history) loss_history->assign(1, loss);

  // Per-feature sample order, fixed for all rounds.
  std::vector<std::vector<Eigen::Index>> order(static_cast<std::size_t>(d));
  for (Eigen::Index f = 0; f < d; ++f) {
    auto& o = order[static_cast<std::size_t>(f)];
    o.resize(static_cast<std::size_t>(n));
    std::iota(o.begin(), o.end(), 0);
    std::stable_sort(o.begin(), o.end(), [&](Eigen::Index a, Eigen::Index b) { return X(a, f) < X(b, f); });
  }

  Eigen::VectorXd g(n), h(n);
  for (int round = 0; round < params.rounds; ++round) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = sigmoid(-y(i) * F(i));
      g(i) = -y(i) * p;
      h(i) = p * (1 - p);
    }
    const double G = g.sum(), H = h.sum();
    Stump best{0, std::numeric_limits<double>::max(), -G / (H + lambda), -G / (H + lambda)};
    double best_gain = G * G / (H + lambda);
    for (Eigen::Index f = 0; f < d; ++f) {
      const auto& o = order[static_cast<std::size_t>(f)];
      double GL = 0, HL = 0;
      for (Eigen::Index k = 0; k + 1 < n; ++k) {
        GL += g(o[static_cast<std::size_t>(k)]);
        HL += h(o[static_cast<std::size_t>(k)]);
        const double xa = X(o[static_cast<std::size_t>(k)], f), xb = X(o[static_cast<std::size_t>(k + 1)], f);
        if (xa == xb) continue;
        const double GR = G - GL, HR = H - HL;
        const double gain = GL * GL / (HL + lambda) + GR * GR / (HR + lambda);
        if (gain > best_gain * (1 + 1e-12) + 1e-300) {
          best_gain = gain;
          best = {static_cast<int>(f), 0.5 * (xa + xb), -GL / (HL + lambda), -GR / (HR + lambda)};
        }
      }
    }
    // Shrunken Newton step, halved until the loss does not increase.
    double step = params.shrinkage;
    Eigen::VectorXd trial(n);
    double trial_loss = loss;
    for (int halving = 0; halving < 40; ++halving, step *= 0.5) {
      for (Eigen::Index i = 0; i < n; ++i)
        trial(i) = F(i) + step * (X(i, best.feature) <= best.threshold ? best.left : best.right);
      trial_loss = loss_of(trial);
      if (trial_loss <= loss) break;
    }
    if (trial_loss > loss) {
      step = 0;
      trial = F;
      trial_loss = loss;
    }
    best.left *= step;
    best.right *= step;
    model.stumps.push_back(best);
    F = trial;
    loss = trial_loss;
    if (loss_history) loss_history->push_back(loss);
  }
  return model;
}

double PlattScaler::probability(double score) const {
  const double z = A * score + B;
  return z >= 0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
}

PlattScaler fit_platt(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::ConfigInvalid, "score/label count mismatch");
  const long prior1 = std::count(labels.begin(), labels.end(), 1);
  const long prior0 = static_cast<long>(labels.size()) - prior1;
  if (prior1 == 0 || prior0 == 0) throw Error(ErrorCode::SingleClass, "calibration data holds a single class");

  // Newton's method with backtracking on Platt's smoothed targets.
  const double hi = (prior1 + 1.0) / (prior1 + 2.0), lo = 1.0 / (prior0 + 2.0);
  const std::size_t n = scores.size();
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = labels[i] == 1 ? hi : lo;
  auto objective = [&](double A, double B) {
    double f = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = scores[i] * A + B;
      f += z >= 0 ? t[i] * z + std::log1p(std::exp(-z)) : (t[i] - 1) * z + std::log1p(std::exp(z));
    }
    return f;
  };
  double A = 0, B = std::log((prior0 + 1.0) / (prior1 + 1.0));
  double fval = objective(A, B);
  constexpr double sigma = 1e-12, eps = 1e-5;
  for (int it = 0; it < 100; ++it) {
    double h11 = sigma, h22 = sigma, h21 = 0, g1 = 0, g2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = scores[i] * A + B;
      const double p = z >= 0 ? std::exp(-z) / (1 + std::exp(-z)) : 1 / (1 + std::exp(z));
      const double q = 1 - p;
      const double d2 = p * q;
      h11 += scores[i] * scores[i] * d2;
      h22 += d2;
      h21 += scores[i] * d2;
      const double d1 = t[i] - p;
      g1 += scores[i] * d1;
      g2 += d1;
    }
    if (std::abs(g1) < eps && std::abs(g2) < eps) break;
    const double det = h11 * h22 - h21 * h21;
    const double dA = -(h22 * g1 - h21 * g2) / det, dB = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * dA + g2 * dB;
    double step = 1;
    bool moved = false;
    while (step >= 1e-10) {
      const double nA = A + step * dA, nB = B + step * dB;
      const double nf = objective(nA, nB);
      if (nf < fval + 1e-4 * step * gd) {
        A = nA;
        B = nB;
        fval = nf;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return {A, B};
}

EventClassifier train_classifier(const std::string& kind, const std::vector<std::string>& names,
                                 const Eigen::MatrixXd& X, std::span<const int> labels, const GBTParams& params) {
  EventClassifier c;
  c.kind = kind;
  c.gbt = train_gbt(X, labels, params);
  c.gbt.feature_names = names;
  std::vector<double> scores(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) scores[static_cast<std::size_t>(i)] = c.gbt.score(X.row(i).transpose());
  c.platt = fit_platt(scores, labels);
  return c;
}

double division_score(const Ellipse& ej, std::span<const Ellipse> successors, const GBTModel& model,
                      const std::function<bool(std::size_t, std::size_t)>& allowed) {
  double best = kNoDivision;
  for (std::size_t k = 0; k < successors.size(); ++k)
    for (std::size_t l = k + 1; l < successors.size(); ++l) {
      if (allowed && !allowed(k, l)) continue;
      best = std::max(best, model.score(division_features(ej, successors[k], successors[l])));
    }
  return best;
}

namespace {

struct LineageCounts {
  long transitions = 0, births = 0, deaths = 0, divisions = 0;
};

LineageCounts count_events(std::span<const LineageForest> gts) {
  LineageCounts c;
  for (const auto& gt : gts)
    for (const auto& t : gt.tracks) {
      c.transitions += t.end - t.begin;
      if (t.parent == 0 && t.begin > 1) ++c.births;
      const auto kids = gt.children(t.id);
      if (kids.empty() && t.end < gt.frames) ++c.deaths;
      if (!kids.empty()) ++c.divisions;
    }
  return c;
}

double rate(long events, long transitions) {
  return clamp_probability(transitions > 0 ? static_cast<double>(events) / static_cast<double>(transitions) : 0.0);
}

}  // namespace

EventPriors estimate_priors(std::span<const LineageForest> gts) {
  const auto c = count_events(gts);
  return {rate(c.births, c.transitions), rate(c.deaths, c.transitions)};
}

EventPriors estimate_priors(const LineageForest& gt) { return estimate_priors(std::span(&gt, 1)); }

double division_rate(std::span<const LineageForest> gts) {
  const auto c = count_events(gts);
  return rate(c.divisions, c.transitions);
}

double division_rate(const LineageForest& gt) { return division_rate(std::span(&gt, 1)); }

nlohmann::json to_json(const EventClassifier& model) {
  nlohmann::json stumps = nlohmann::json::array();
  for (const auto& s : model.gbt.stumps) stumps.push_back({s.feature, s.threshold, s.left, s.right});
  return {{"schema", kFeatureSchemaVersion},
          {"kind", model.kind},
          {"features", model.gbt.feature_names},
          {"base_score", model.gbt.base_score},
          {"shrinkage", model.gbt.shrinkage},
          {"stumps", stumps},
          {"platt", {{"A", model.platt.A}, {"B", model.platt.B}}}};
}

EventClassifier classifier_from_json(const nlohmann::json& j) {
  try {
    if (j.at("schema").get<int>() != kFeatureSchemaVersion)
      throw Error(ErrorCode::ConfigInvalid, "unsupported model schema version");
    EventClassifier c;
    c.kind = j.at("kind").get<std::string>();
    c.gbt.feature_names = j.at("features").get<std::vector<std::string>>();
    c.gbt.base_score = j.at("base_score").get<double>();
    c.gbt.shrinkage = j.at("shrinkage").get<double>();
    for (const auto& s : j.at("stumps")) {
      Stump st{s.at(0).get<int>(), s.at(1).get<double>(), s.at(2).get<double>(), s.at(3).get<double>()};
      if (st.feature < 0 || st.feature >= static_cast<int>(c.gbt.feature_names.size()))
        throw Error(ErrorCode::ConfigInvalid, "stump feature index out of range");
      c.gbt.stumps.push_back(st);
    }
    c.platt.A = j.at("platt").at("A").get<double>();
    c.platt.B = j.at("platt").at("B").get<double>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, fmt::format("malformed model: {}", e.what()));
  }
}

void save_classifier(const EventClassifier& model, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, fmt::format("cannot write {}", path.string()));
  out << to_json(model).dump(2) << "\n";
  if (!out) throw Error(ErrorCode::IoFailure, fmt::format("write failed: {}", path.string()));
}

EventClassifier load_classifier(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, fmt::format("cannot read {}", path.string()));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, fmt::format("{}: {}", path.string(), e.what()));
  }
  return classifier_from_json(j);
}

void write_samples(const SampleTable& table, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, fmt::format("cannot write {}", path.string()));
  out << "label";
  for (const auto& n : table.names) out << "," << n;
  out << "\n";
  for (Eigen::Index i = 0; i < table.X.rows(); ++i) {
    out << table.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index f = 0; f < table.X.cols(); ++f) out << fmt::format(",{}", table.X(i, f));
    out << "\n";
  }
  if (!out) throw Error(ErrorCode::IoFailure, fmt::format("write failed: {}", path.string()));
}

SampleTable read_samples(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, fmt::format("cannot read {}", path.string()));
  SampleTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::IoFailure, fmt::format("{} is empty", path.string()));
  {
    std::istringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    if (cell != "label") throw Error(ErrorCode::IoFailure, fmt::format("{}: first column must be 'label'", path.string()));
    while (std::getline(ss, cell, ',')) t.names.push_back(cell);
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<double> row;
    std::getline(ss, cell, ',');
    int label = 0;
    try {
      label = std::stoi(cell);
      while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw Error(ErrorCode::IoFailure, fmt::format("{}: malformed row '{}'", path.string(), line));
    }
    if (row.size() != t.names.size() || (label != 1 && label != -1))
      throw Error(ErrorCode::IoFailure, fmt::format("{}: malformed row '{}'", path.string(), line));
    t.labels.push_back(label);
    rows.push_back(std::move(row));
  }
  t.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t f = 0; f < rows[i].size(); ++f) t.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = rows[i][f];
  return t;
}

}  // namespace celltrack
