#include "lvseg/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "lvseg/error.hpp"

namespace lvseg {
namespace {

using Json = nlohmann::ordered_json;

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_same_grid(const LabelVolume& a, const LabelVolume& b) {
  if (a.dims() != b.dims()) throw GridError("masks have different dimensions");
  if (a.spacing() != b.spacing()) throw GridError("masks have different spacing");
}

// Squared distance transform along one line (Felzenszwalb & Huttenlocher),
// sites at positions i * spacing. Infinite entries are not sites.
void edt_line(const double* f, std::size_t stride, int n, double spacing, double* out, std::vector<int>& v,
              std::vector<double>& z) {
  v.resize(static_cast<std::size_t>(n));
  z.resize(static_cast<std::size_t>(n) + 1);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    const double fq = f[q * stride];
    if (fq == kInf) continue;
    const double xq = q * spacing;
    while (k >= 0) {
      const double xv = v[k] * spacing;
      const double s = ((fq + xq * xq) - (f[v[k] * stride] + xv * xv)) / (2.0 * (xq - xv));
      if (s <= z[k]) {
        --k;
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = kInf;
      break;
    }
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
    }
  }
  if (k < 0) {
    for (int p = 0; p < n; ++p) out[p] = kInf;
    return;
  }
  int j = 0;
  for (int p = 0; p < n; ++p) {
    const double xp = p * spacing;
    while (z[j + 1] < xp) ++j;
    const double d = xp - v[j] * spacing;
    out[p] = d * d + f[v[j] * stride];
  }
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> json_optional(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::optional<double> mean_of(const std::vector<ScanMetrics>& scans, std::optional<double> ScanMetrics::*field) {
  double s = 0.0;
  int n = 0;
  for (const auto& m : scans)
    if (m.*field) {
      s += *(m.*field);
      ++n;
    }
  if (n == 0) return std::nullopt;
  return s / n;
}

}  // namespace

double dice(const LabelVolume& a, const LabelVolume& b) {
  check_same_grid(a, b);
  std::uint64_t na = 0, nb = 0, both = 0;
  const auto va = a.voxels();
  const auto vb = b.voxels();
  for (std::size_t i = 0; i < va.size(); ++i) {
    na += va[i] != 0;
    nb += vb[i] != 0;
    both += (va[i] != 0) && (vb[i] != 0);
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<Index3> surface_voxels(const LabelVolume& mask) {
  const Index3 d = mask.dims();
  std::vector<Index3> out;
  for (int z = 0; z < d[2]; ++z)
    for (int y = 0; y < d[1]; ++y)
      for (int x = 0; x < d[0]; ++x) {
        if (!mask.at(x, y, z)) continue;
        const bool edge = x == 0 || y == 0 || z == 0 || x == d[0] - 1 || y == d[1] - 1 || z == d[2] - 1;
        if (edge || !mask.at(x - 1, y, z) || !mask.at(x + 1, y, z) || !mask.at(x, y - 1, z) ||
            !mask.at(x, y + 1, z) || !mask.at(x, y, z - 1) || !mask.at(x, y, z + 1))
          out.push_back({x, y, z});
      }
  return out;
}

std::vector<double> distance_to_set(const GridGeometry& grid, const std::vector<Index3>& targets) {
  const Index3 d = grid.dims;
  std::vector<double> f(grid.voxel_count(), kInf);
  for (const Index3& t : targets) f[grid.linear(t[0], t[1], t[2])] = 0.0;
  std::vector<double> line(static_cast<std::size_t>(std::max({d[0], d[1], d[2]})));
  std::vector<int> v;
  std::vector<double> z;
  const std::size_t sx = 1, sy = static_cast<std::size_t>(d[0]), sz = static_cast<std::size_t>(d[0]) * d[1];
  for (int k = 0; k < d[2]; ++k)
    for (int j = 0; j < d[1]; ++j) {
      double* base = f.data() + k * sz + j * sy;
      edt_line(base, sx, d[0], grid.spacing[0], line.data(), v, z);
      for (int i = 0; i < d[0]; ++i) base[i * sx] = line[i];
    }
  for (int k = 0; k < d[2]; ++k)
    for (int i = 0; i < d[0]; ++i) {
      double* base = f.data() + k * sz + i * sx;
      edt_line(base, sy, d[1], grid.spacing[1], line.data(), v, z);
      for (int j = 0; j < d[1]; ++j) base[j * sy] = line[j];
    }
  for (int j = 0; j < d[1]; ++j)
    for (int i = 0; i < d[0]; ++i) {
      double* base = f.data() + j * sy + i * sx;
      edt_line(base, sz, d[2], grid.spacing[2], line.data(), v, z);
      for (int k = 0; k < d[2]; ++k) base[k * sz] = line[k];
    }
  for (double& x : f) x = std::sqrt(x);
  return f;
}

double mean_abs_surface_distance(const LabelVolume& a, const LabelVolume& b) {
  check_same_grid(a, b);
  const auto sa = surface_voxels(a);
  const auto sb = surface_voxels(b);
  if (sa.empty() || sb.empty()) throw UndefinedDistanceError("surface distance is undefined for an empty mask");
  const GridGeometry& g = a.geometry();
  const auto to_b = distance_to_set(g, sb);
  const auto to_a = distance_to_set(g, sa);
  // Each direction summed on its own so the result is exactly symmetric.
  double sum_a = 0.0, sum_b = 0.0;
  for (const Index3& p : sa) sum_a += to_b[g.linear(p[0], p[1], p[2])];
  for (const Index3& p : sb) sum_b += to_a[g.linear(p[0], p[1], p[2])];
  return (sum_a + sum_b) / static_cast<double>(sa.size() + sb.size());
}

SensitivitySpecificity sensitivity_specificity(const LabelVolume& pred, const LabelVolume& ref,
                                               const BoundingBox3D& box) {
  check_same_grid(pred, ref);
  box.validate(pred.dims());
  SensitivitySpecificity r;
  ConfusionCounts& c = r.counts;
  for (int z = box.lo[2]; z <= box.hi[2]; ++z)
    for (int y = box.lo[1]; y <= box.hi[1]; ++y)
      for (int x = box.lo[0]; x <= box.hi[0]; ++x) {
        const bool p = pred.at(x, y, z) != 0;
        const bool t = ref.at(x, y, z) != 0;
        if (p && t)
          ++c.tp;
        else if (p)
          ++c.fp;
        else if (t)
          ++c.fn;
        else
          ++c.tn;
      }
  if (c.tp + c.fn > 0) r.sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (c.tn + c.fp > 0) r.specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return r;
}

ScanMetrics evaluate_scan(const std::string& id, const LabelVolume& prediction, const LabelVolume& reference,
                          const BoundingBox3D& box) {
  ScanMetrics m;
  m.id = id;
  m.box = box;
  m.dice = dice(prediction, reference);
  bool pred_empty = true;
  for (auto v : prediction.voxels())
    if (v) {
      pred_empty = false;
      break;
    }
  if (pred_empty) m.flags.push_back("empty_prediction");
  try {
    m.mad_mm = mean_abs_surface_distance(prediction, reference);
  } catch (const UndefinedDistanceError&) {
    m.flags.push_back("mad_undefined");
  }
  const auto ss = sensitivity_specificity(prediction, reference, box);
  m.sensitivity = ss.sensitivity;
  m.specificity = ss.specificity;
  if (!m.sensitivity) m.flags.push_back("sensitivity_undefined");
  if (!m.specificity) m.flags.push_back("specificity_undefined");
  return m;
}

AggregateMetrics aggregate(const std::vector<ScanMetrics>& scans) {
  AggregateMetrics a;
  a.scan_count = static_cast<int>(scans.size());
  if (scans.empty()) return a;
  double s = 0.0;
  for (const auto& m : scans) s += m.dice;
  a.dice = s / static_cast<double>(scans.size());
  a.mad_mm = mean_of(scans, &ScanMetrics::mad_mm);
  a.sensitivity = mean_of(scans, &ScanMetrics::sensitivity);
  a.specificity = mean_of(scans, &ScanMetrics::specificity);
  return a;
}

EvaluationReport evaluate_dataset(const std::vector<ScanInput>& scans) {
  EvaluationReport r;
  for (const auto& s : scans) {
    if (!s.prediction || !s.reference) throw ConfigError("scan " + s.id + " is missing a prediction or reference");
    r.scans.push_back(evaluate_scan(s.id, *s.prediction, *s.reference, s.box));
  }
  r.aggregate = aggregate(r.scans);
  return r;
}

EvaluationReport evaluate_dataset(const std::vector<LabelVolume>& predictions, const std::vector<LabelVolume>& references,
                                  const std::vector<BoundingBox3D>& boxes, const std::vector<std::string>& ids) {
  if (predictions.size() != references.size() || predictions.size() != boxes.size() ||
      (!ids.empty() && ids.size() != predictions.size()))
    throw ConfigError("prediction, reference and box lists differ in length");
  std::vector<ScanInput> scans;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    scans.push_back({ids.empty() ? std::to_string(i) : ids[i], &predictions[i], &references[i], boxes[i]});
  return evaluate_dataset(scans);
}

std::string report_to_json(const EvaluationReport& report) {
  Json scans = Json::array();
  for (const auto& m : report.scans) {
    Json s;
    s["id"] = m.id;
    s["dice"] = m.dice;
    s["mad_mm"] = optional_json(m.mad_mm);
    s["sensitivity"] = optional_json(m.sensitivity);
    s["specificity"] = optional_json(m.specificity);
    s["box"] = {m.box.lo[0], m.box.lo[1], m.box.lo[2], m.box.hi[0], m.box.hi[1], m.box.hi[2]};
    s["flags"] = m.flags;
    scans.push_back(std::move(s));
  }
  Json agg;
  agg["dice"] = report.aggregate.dice;
  agg["mad_mm"] = optional_json(report.aggregate.mad_mm);
  agg["sensitivity"] = optional_json(report.aggregate.sensitivity);
  agg["specificity"] = optional_json(report.aggregate.specificity);
  agg["scan_count"] = report.aggregate.scan_count;
  Json root;
  root["scans"] = std::move(scans);
  root["aggregate"] = std::move(agg);
  return root.dump(2) + "\n";
}

EvaluationReport report_from_json(const std::string& text) {
  try {
    const Json root = Json::parse(text);
    EvaluationReport r;
    for (const auto& s : root.at("scans")) {
      ScanMetrics m;
      m.id = s.at("id").get<std::string>();
      m.dice = s.at("dice").get<double>();
      m.mad_mm = json_optional(s.at("mad_mm"));
      m.sensitivity = json_optional(s.at("sensitivity"));
      m.specificity = json_optional(s.at("specificity"));
      const auto box = s.at("box").get<std::vector<int>>();
      if (box.size() != 6) throw FormatError("box must have 6 entries");
      m.box = {{box[0], box[1], box[2]}, {box[3], box[4], box[5]}};
      m.flags = s.at("flags").get<std::vector<std::string>>();
      r.scans.push_back(std::move(m));
    }
    const Json& a = root.at("aggregate");
    r.aggregate.dice = a.at("dice").get<double>();
    r.aggregate.mad_mm = json_optional(a.at("mad_mm"));
    r.aggregate.sensitivity = json_optional(a.at("sensitivity"));
    r.aggregate.specificity = json_optional(a.at("specificity"));
    r.aggregate.scan_count = a.at("scan_count").get<int>();
    return r;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("invalid evaluation report: ") + e.what());
  }
}

void write_report(const EvaluationReport& report, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write report " + path.string());
  f << report_to_json(report);
  if (!f) throw IoError("short write to report " + path.string());
}

}  // namespace lvseg
