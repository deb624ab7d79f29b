#include "mmadapt/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "mmadapt/errors.hpp"

namespace mmadapt {

namespace {

void require_same_shape(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (a.height != b.height || a.width != b.width) {
    throw ShapeError(std::string(what) + ": mask shapes differ (" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) +
                     ")");
  }
}

double directed_distance_sum(const std::vector<Pixel>& from, const std::vector<Pixel>& to) {
  double total = 0.0;
  for (const Pixel& a : from) {
    long best = std::numeric_limits<long>::max();
    for (const Pixel& b : to) {
      const long dr = a.row - b.row, dc = a.col - b.col;
      best = std::min(best, dr * dr + dc * dc);
    }
    total += std::sqrt(static_cast<double>(best));
  }
  return total;
}

}  // namespace

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

BinaryMask BinaryMask::from_labels(const LabelMap& labels, int class_id) {
  BinaryMask m(labels.height, labels.width);
  for (std::size_t i = 0; i < labels.size(); ++i) m.bits[i] = labels.data[i] == class_id ? 1 : 0;
  return m;
}

double dice_score(const BinaryMask& pred, const BinaryMask& truth) {
  require_same_shape(pred, truth, "dice_score");
  std::size_t p = 0, t = 0, both = 0;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) {
    const bool a = pred.bits[i] != 0, b = truth.bits[i] != 0;
    p += a;
    t += b;
    both += a && b;
  }
  if (p + t == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + t);
}

std::vector<Pixel> extract_boundary(const BinaryMask& mask) {
  std::vector<Pixel> out;
  const auto h = static_cast<long>(mask.height), w = static_cast<long>(mask.width);
  auto fg = [&](long y, long x) {
    return y >= 0 && y < h && x >= 0 && x < w && mask.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      if (!fg(y, x)) continue;
      if (!fg(y - 1, x) || !fg(y + 1, x) || !fg(y, x - 1) || !fg(y, x + 1)) {
        out.push_back({static_cast<int>(y), static_cast<int>(x)});
      }
    }
  }
  return out;
}

double average_surface_distance(const BinaryMask& pred, const BinaryMask& truth, std::optional<double> empty_penalty) {
  require_same_shape(pred, truth, "average_surface_distance");
  const auto bp = extract_boundary(pred);
  const auto bt = extract_boundary(truth);
  if (bp.empty() && bt.empty()) return 0.0;
  if (bp.empty() || bt.empty()) {
    return empty_penalty.value_or(
        std::hypot(static_cast<double>(pred.height), static_cast<double>(pred.width)));
  }
  const double total = directed_distance_sum(bp, bt) + directed_distance_sum(bt, bp);
  return total / static_cast<double>(bp.size() + bt.size());
}

const ClassMetrics& MetricReport::for_class(int class_id) const {
  for (const auto& c : classes) {
    if (c.class_id == class_id) return c;
  }
  throw std::out_of_range("metric report has no class " + std::to_string(class_id));
}

std::string MetricReport::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "class_id,class_name,dsc,asd\n";
  for (const auto& c : classes) os << c.class_id << ',' << c.name << ',' << c.dsc << ',' << c.asd << '\n';
  os << "mean,mean," << mean_dsc << ',' << mean_asd << '\n';
  return os.str();
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["images"] = images;
  j["mean_dsc"] = mean_dsc;
  j["mean_asd"] = mean_asd;
  j["classes"] = nlohmann::ordered_json::array();
  for (const auto& c : classes) {
    j["classes"].push_back({{"class_id", c.class_id}, {"name", c.name}, {"dsc", c.dsc}, {"asd", c.asd}});
  }
  return j.dump(2) + "\n";
}

MetricReport evaluate_predictions(const std::vector<LabelMap>& predictions, const std::vector<LabelMap>& truths,
                                  const std::vector<int>& class_ids) {
  if (predictions.size() != truths.size() || predictions.empty()) {
    throw DataError("evaluate_predictions: need matching non-empty prediction and truth lists");
  }
  MetricReport report;
  report.images = predictions.size();
  for (int c : class_ids) {
    ClassMetrics m{c, class_name(c), 0.0, 0.0};
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      const BinaryMask p = BinaryMask::from_labels(predictions[i], c);
      const BinaryMask t = BinaryMask::from_labels(truths[i], c);
      m.dsc += dice_score(p, t);
      m.asd += average_surface_distance(p, t);
    }
    m.dsc /= static_cast<double>(predictions.size());
    m.asd /= static_cast<double>(predictions.size());
    report.classes.push_back(m);
  }
  for (const auto& c : report.classes) {
    report.mean_dsc += c.dsc;
    report.mean_asd += c.asd;
  }
  if (!report.classes.empty()) {
    report.mean_dsc /= static_cast<double>(report.classes.size());
    report.mean_asd /= static_cast<double>(report.classes.size());
  }
  return report;
}

std::string class_name(int class_id) {
  switch (class_id) {
    case 0: return "background";
    case 1: return "liver";
    case 2: return "spleen";
    case 3: return "kidney";
    default: return "class" + std::to_string(class_id);
  }
}

}  // namespace mmadapt
