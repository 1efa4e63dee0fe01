#include "gdgt/metrics.hpp"

#include <cstdio>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace gdgt {

ConfusionMatrix::ConfusionMatrix(std::size_t num_categories) : k_(num_categories), counts_(k_ * k_, 0) {}

void ConfusionMatrix::accumulate(const LabelMask& pred, const LabelMask& gt) {
  if (pred.height != gt.height || pred.width != gt.width || pred.labels.size() != gt.labels.size()) {
    throw std::invalid_argument("accumulate: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                                " and ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width) +
                                " differ");
  }
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    if (gt.labels[i] >= k_ || pred.labels[i] >= k_) {
      throw std::out_of_range("accumulate: label out of range at pixel " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < gt.labels.size(); ++i) ++counts_[gt.labels[i] * k_ + pred.labels[i]];
}

void ConfusionMatrix::add(std::size_t gt, std::size_t pred, std::uint64_t n) {
  if (gt >= k_ || pred >= k_) throw std::out_of_range("ConfusionMatrix::add: label out of range");
  counts_[gt * k_ + pred] += n;
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw std::invalid_argument("merge: category counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

SegmentationMetrics compute_metrics(const ConfusionMatrix& cm) {
  const std::size_t K = cm.num_categories();
  const double total = static_cast<double>(cm.total());
  if (cm.total() == 0) throw std::invalid_argument("compute_metrics: empty confusion matrix");
  SegmentationMetrics m;
  m.iou.assign(K, 0.0);
  m.f1_per_category.assign(K, 0.0);
  m.present.assign(K, false);
  double trace = 0.0, iou_sum = 0.0, f1_sum = 0.0;
  std::size_t n_present = 0;
  for (std::size_t c = 0; c < K; ++c) {
    double gt = 0.0, pred = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      gt += static_cast<double>(cm.count(c, j));
      pred += static_cast<double>(cm.count(j, c));
    }
    const double tp = static_cast<double>(cm.count(c, c));
    const double fn = gt - tp, fp = pred - tp;
    trace += tp;
    if (tp + fp + fn == 0.0) continue;
    m.present[c] = true;
    m.iou[c] = tp / (tp + fp + fn);
    m.f1_per_category[c] = 2.0 * tp / (2.0 * tp + fp + fn);
    iou_sum += m.iou[c];
    f1_sum += m.f1_per_category[c];
    m.fwiou += gt / total * m.iou[c];
    ++n_present;
  }
  m.miou = iou_sum / static_cast<double>(n_present);
  m.f1 = f1_sum / static_cast<double>(n_present);
  m.oa = trace / total;
  return m;
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string pad_right(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::string pad_left(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

constexpr std::size_t kTagWidth = 20;

}  // namespace

std::string report_header(std::size_t num_categories) {
  std::string h = pad_right("Method", kTagWidth) + "mIoU(%) F1(%) OA(%) FWIoU(%) | IoU(%):";
  for (std::size_t c = 0; c < num_categories; ++c)
    h += " " + (c < kCategoryNames.size() ? std::string(kCategoryNames[c]) : "C" + std::to_string(c));
  return h;
}

std::string report_row(const SegmentationMetrics& m, const std::string& tag) {
  std::string r = pad_right(tag, kTagWidth) + pct(m.miou) + " " + pct(m.f1) + " " + pct(m.oa) + " " + pct(m.fwiou) + " |";
  for (std::size_t c = 0; c < m.iou.size(); ++c) r += " " + pad_left(m.present[c] ? pct(m.iou[c]) : "n/a", 6);
  return r;
}

std::string metrics_dump(const SegmentationMetrics& m, const std::string& tag) {
  std::ostringstream os;
  os << std::setprecision(17);
  if (!tag.empty()) os << "tag=" << tag << '\n';
  os << "miou=" << m.miou << '\n' << "f1=" << m.f1 << '\n' << "oa=" << m.oa << '\n' << "fwiou=" << m.fwiou << '\n';
  for (std::size_t c = 0; c < m.iou.size(); ++c) {
    os << "iou." << c << '=' << m.iou[c] << '\n';
    os << "f1." << c << '=' << m.f1_per_category[c] << '\n';
    os << "present." << c << '=' << (m.present[c] ? 1 : 0) << '\n';
  }
  return os.str();
}

SegmentationMetrics parse_metrics_dump(const std::string& text, std::string* tag) {
  SegmentationMetrics m;
  std::istringstream in(text);
  std::string line;
  auto grow = [&m](std::size_t c) {
    if (m.iou.size() <= c) {
      m.iou.resize(c + 1, 0.0);
      m.f1_per_category.resize(c + 1, 0.0);
      m.present.resize(c + 1, false);
    }
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("metrics dump: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "tag") {
      if (tag) *tag = value;
      continue;
    }
    const double v = std::stod(value);
    if (key == "miou") m.miou = v;
    else if (key == "f1") m.f1 = v;
    else if (key == "oa") m.oa = v;
    else if (key == "fwiou") m.fwiou = v;
    else if (key.rfind("iou.", 0) == 0) { auto c = std::stoul(key.substr(4)); grow(c); m.iou[c] = v; }
    else if (key.rfind("f1.", 0) == 0) { auto c = std::stoul(key.substr(3)); grow(c); m.f1_per_category[c] = v; }
    else if (key.rfind("present.", 0) == 0) { auto c = std::stoul(key.substr(8)); grow(c); m.present[c] = v != 0.0; }
    else throw std::runtime_error("metrics dump: unknown key '" + key + "'");
  }
  return m;
}

}  // namespace gdgt
