#include "metrics/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "common/error.hpp"

namespace dvqa::metrics {

std::size_t argmax(std::span<const double> v) {
  if (v.empty()) throw UsageError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

const char* source_name(Source s) {
  switch (s) {
    case Source::TrainGt: return "train-gt";
    case Source::TestGt: return "test-gt";
    case Source::Model: return "model";
  }
  return "?";
}

namespace {

void normalize(AnswerDistribution& d) {
  if (d.count == 0) return;
  for (auto& [a, f] : d.freq) f /= static_cast<double>(d.count);
}

}  // namespace

AnswerDistribution answer_distribution(std::span<const PredictionRecord> records, std::size_t type) {
  AnswerDistribution d;
  d.question_type = type;
  d.source = Source::Model;
  for (const auto& r : records) {
    if (r.question_type != type) continue;
    d.freq[r.predicted] += 1.0;
    ++d.count;
  }
  normalize(d);
  return d;
}

AnswerDistribution answer_distribution(std::span<const data::Instance> instances, std::size_t type, Source source) {
  AnswerDistribution d;
  d.question_type = type;
  d.source = source;
  for (const auto& inst : instances) {
    if (inst.question_type != type) continue;
    d.freq[inst.label] += 1.0;
    ++d.count;
  }
  normalize(d);
  return d;
}

double js_divergence(const AnswerDistribution& a, const AnswerDistribution& b) {
  if (a.empty() || b.empty()) throw UsageError("JS divergence needs two non-empty distributions");
  std::set<std::size_t> support;
  for (const auto& [k, f] : a.freq) support.insert(k);
  for (const auto& [k, f] : b.freq) support.insert(k);
  double js = 0.0;
  for (std::size_t k : support) {
    const auto ia = a.freq.find(k);
    const auto ib = b.freq.find(k);
    const double p = ia == a.freq.end() ? 0.0 : ia->second;
    const double q = ib == b.freq.end() ? 0.0 : ib->second;
    const double m = 0.5 * (p + q);
    if (p > 0.0) js += 0.5 * p * std::log2(p / m);
    if (q > 0.0) js += 0.5 * q * std::log2(q / m);
  }
  return std::max(0.0, js);
}

std::optional<double> ClassDistances::mean_intra() const {
  if (intra.empty()) return std::nullopt;
  double s = 0.0;
  for (const auto& [c, d] : intra) s += d;
  return s / static_cast<double>(intra.size());
}

std::optional<double> ClassDistances::ratio() const {
  const auto mi = mean_intra();
  if (!inter || !mi || *mi <= 0.0) return std::nullopt;
  return *inter / *mi;
}

namespace {

double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

ClassDistances class_distances(std::span<const std::vector<double>> vectors, std::span<const std::size_t> labels) {
  if (vectors.size() != labels.size()) throw UsageError("class_distances: vector and label counts differ");
  for (const auto& v : vectors) {
    if (v.size() != vectors.front().size()) throw UsageError("class_distances: vectors differ in width");
  }
  std::map<std::size_t, std::pair<double, std::size_t>> within;
  std::map<std::size_t, std::size_t> members;
  double across = 0.0;
  std::size_t across_pairs = 0;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    ++members[labels[i]];
    for (std::size_t j = i + 1; j < vectors.size(); ++j) {
      const double d = euclidean(vectors[i], vectors[j]);
      if (labels[i] == labels[j]) {
        auto& w = within[labels[i]];
        w.first += d;
        ++w.second;
      } else {
        across += d;
        ++across_pairs;
      }
    }
  }
  ClassDistances out;
  for (const auto& [c, n] : members) {
    if (n < 2) {
      out.warnings.push_back("class " + std::to_string(c) + " has " + std::to_string(n) +
                             " member; intra-class distance omitted");
      continue;
    }
    const auto& w = within[c];
    out.intra[c] = w.first / static_cast<double>(w.second);
  }
  if (across_pairs > 0) {
    out.inter = across / static_cast<double>(across_pairs);
  } else {
    out.warnings.push_back("fewer than two classes; inter-class distance omitted");
  }
  return out;
}

ClassDistances class_distances(std::span<const PredictionRecord> records, std::size_t type, bool use_logits) {
  std::vector<std::vector<double>> vectors;
  std::vector<std::size_t> labels;
  for (const auto& r : records) {
    if (r.question_type != type) continue;
    vectors.push_back(use_logits ? r.logits : r.probs);
    labels.push_back(r.label);
  }
  return class_distances(vectors, labels);
}

std::vector<std::pair<double, double>> project_2d(std::span<const std::vector<double>> rows) {
  std::vector<std::pair<double, double>> out(rows.size(), {0.0, 0.0});
  if (rows.empty()) return out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto dim = static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd x(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != dim) throw UsageError("project_2d: rows differ in width");
    for (Eigen::Index j = 0; j < dim; ++j) x(i, j) = rows[i][j];
  }
  x.rowwise() -= x.colwise().mean();
  const Eigen::MatrixXd cov = x.transpose() * x;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::MatrixXd& vecs = eig.eigenvectors();  // ascending eigenvalues
  for (int c = 0; c < 2 && c < dim; ++c) {
    Eigen::VectorXd v = vecs.col(dim - 1 - c);
    Eigen::Index big = 0;
    v.cwiseAbs().maxCoeff(&big);
    if (v(big) < 0) v = -v;
    const Eigen::VectorXd s = x * v;
    for (Eigen::Index i = 0; i < n; ++i) (c == 0 ? out[i].first : out[i].second) = s(i);
  }
  return out;
}

void export_answer_space(std::span<const PredictionRecord> records, std::size_t type, const std::string& path,
                         bool use_logits) {
  std::vector<const PredictionRecord*> sel;
  std::vector<std::vector<double>> rows;
  for (const auto& r : records) {
    if (r.question_type != type) continue;
    sel.push_back(&r);
    rows.push_back(use_logits ? r.logits : r.probs);
  }
  if (sel.empty()) throw UsageError("no records of question type " + std::to_string(type) + " to export");
  const auto proj = project_2d(rows);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  const char* prefix = use_logits ? "z_" : "p_";
  out << "id,label,predicted";
  for (std::size_t k = 0; k < rows.front().size(); ++k) out << ',' << prefix << k;
  out << ",pc1,pc2\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < sel.size(); ++i) {
    out << sel[i]->instance_id << ',' << sel[i]->label << ',' << sel[i]->predicted;
    for (double x : rows[i]) out << ',' << x;
    out << ',' << proj[i].first << ',' << proj[i].second << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

std::string distribution_svg(const std::vector<AnswerDistribution>& dists, const std::vector<std::string>& legend,
                             const data::AnswerVocab& answers, const std::string& title) {
  static const char* colors[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377"};
  std::set<std::size_t> support;
  for (const auto& d : dists) {
    for (const auto& [a, f] : d.freq) support.insert(a);
  }
  const int bar = 12, gap = 10, label_w = 120, plot_w = 360, top = 40;
  const int group_h = static_cast<int>(dists.size()) * bar + gap;
  const int height = top + static_cast<int>(support.size()) * group_h + 20 * static_cast<int>(dists.size()) + 20;
  std::ostringstream s;
  s << std::fixed << std::setprecision(1);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << label_w + plot_w + 80 << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text x=\"10\" y=\"20\" font-size=\"14\">" << title << "</text>\n";
  int y = top;
  for (std::size_t a : support) {
    s << "<text x=\"10\" y=\"" << y + bar << "\">" << answers.at(a) << "</text>\n";
    for (std::size_t k = 0; k < dists.size(); ++k) {
      const auto it = dists[k].freq.find(a);
      const double f = it == dists[k].freq.end() ? 0.0 : it->second;
      s << "<rect class=\"bar\" x=\"" << label_w << "\" y=\"" << y + static_cast<int>(k) * bar << "\" width=\"" << f * plot_w
        << "\" height=\"" << bar - 2 << "\" fill=\"" << colors[k % 6] << "\"/>\n";
      s << "<text x=\"" << label_w + f * plot_w + 4 << "\" y=\"" << y + static_cast<int>(k + 1) * bar - 3 << "\">"
        << f * 100.0 << "%</text>\n";
    }
    y += group_h;
  }
  for (std::size_t k = 0; k < dists.size(); ++k) {
    s << "<rect x=\"10\" y=\"" << y + static_cast<int>(k) * 20 << "\" width=\"12\" height=\"12\" fill=\""
      << colors[k % 6] << "\"/><text x=\"28\" y=\"" << y + static_cast<int>(k) * 20 + 10 << "\">"
      << (k < legend.size() ? legend[k] : std::string(source_name(dists[k].source))) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

Analysis analyze(const data::Dataset& ds, std::span<const PredictionRecord> test_records) {
  Analysis out;
  std::set<std::size_t> types;
  for (const auto& inst : ds.test.instances) types.insert(inst.question_type);
  double js_test = 0.0, js_train = 0.0, ratio = 0.0, intra = 0.0, inter = 0.0;
  std::size_t n_js = 0, n_ratio = 0;
  for (std::size_t t : types) {
    TypeAnalysis ta;
    ta.question_type = t;
    ta.name = ds.types.name(t);
    ta.train_gt = answer_distribution(ds.train.instances, t, Source::TrainGt);
    ta.test_gt = answer_distribution(ds.test.instances, t, Source::TestGt);
    ta.model = answer_distribution(test_records, t);
    if (!ta.model.empty()) {
      ta.js_model_test = js_divergence(ta.model, ta.test_gt);
      if (!ta.train_gt.empty()) ta.js_model_train = js_divergence(ta.model, ta.train_gt);
      js_test += *ta.js_model_test;
      js_train += ta.js_model_train.value_or(0.0);
      ++n_js;
    }
    ta.distances = class_distances(test_records, t);
    if (auto r = ta.distances.ratio()) {
      ratio += *r;
      intra += *ta.distances.mean_intra();
      inter += *ta.distances.inter;
      ++n_ratio;
    }
    out.types.push_back(std::move(ta));
  }
  if (n_js) {
    out.mean_js_model_test = js_test / static_cast<double>(n_js);
    out.mean_js_model_train = js_train / static_cast<double>(n_js);
  }
  if (n_ratio) {
    out.mean_distance_ratio = ratio / static_cast<double>(n_ratio);
    out.mean_intra = intra / static_cast<double>(n_ratio);
    out.mean_inter = inter / static_cast<double>(n_ratio);
  }
  return out;
}

}  // namespace dvqa::metrics
