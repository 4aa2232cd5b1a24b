#include "dcaseg/metrics.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace dcaseg {

using nlohmann::json;

namespace {

struct Counts {
  uint64_t inter = 0, pred = 0, gt = 0;
};

Counts count_overlap(const Mask& pred, const Mask& gt) {
  if (pred.h != gt.h || pred.w != gt.w)
    throw std::runtime_error("metric shape mismatch");
  Counts c;
  for (size_t i = 0; i < pred.data.size(); ++i) {
    const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
    c.inter += (p && g);
    c.pred += p;
    c.gt += g;
  }
  return c;
}

double dice_from_counts(const Counts& c) {
  if (c.pred + c.gt == 0) return 1.0;
  return 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.pred + c.gt);
}

double jaccard_from_counts(const Counts& c) {
  const uint64_t uni = c.pred + c.gt - c.inter;
  if (uni == 0) return 1.0;
  return static_cast<double>(c.inter) / static_cast<double>(uni);
}

}  // namespace

double dice_score(const Mask& pred, const Mask& gt) {
  return dice_from_counts(count_overlap(pred, gt));
}

double jaccard_score(const Mask& pred, const Mask& gt) {
  return jaccard_from_counts(count_overlap(pred, gt));
}

double seg_score(const Mask& pred, const Mask& gt) {
  const Counts c = count_overlap(pred, gt);
  return 0.5 * (dice_from_counts(c) + jaccard_from_counts(c));
}

double challenge_score(double prelim, double final_score, ChallengeWeights w) {
  if (prelim < 0.0 || prelim > 1.0 || final_score < 0.0 || final_score > 1.0)
    throw std::runtime_error("challenge_score inputs must lie in [0,1]");
  return w.preliminary * prelim + w.final_ * final_score;
}

MetricsReport evaluate_masks(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
                             const std::vector<std::string>& ids,
                             const std::vector<int>& domain_ids,
                             const std::vector<std::string>& domain_names,
                             const std::string& protocol, bool pooled) {
  if (preds.size() != gts.size() || preds.size() != ids.size() ||
      preds.size() != domain_ids.size())
    throw std::runtime_error("evaluate_masks input size mismatch");

  MetricsReport r;
  r.protocol = protocol;
  r.domains = domain_names;
  r.pooled = pooled;
  Counts pool;
  for (size_t i = 0; i < preds.size(); ++i) {
    const Counts c = count_overlap(preds[i], gts[i]);
    ImageResult ir;
    ir.image_id = ids[i];
    ir.domain = domain_ids[i];
    ir.dice = dice_from_counts(c);
    ir.jaccard = jaccard_from_counts(c);
    ir.seg = 0.5 * (ir.dice + ir.jaccard);
    r.per_image.push_back(std::move(ir));
    pool.inter += c.inter;
    pool.pred += c.pred;
    pool.gt += c.gt;
  }
  if (!r.per_image.empty()) {
    for (const ImageResult& ir : r.per_image) {
      r.mean_dice += ir.dice;
      r.mean_jaccard += ir.jaccard;
      r.mean_seg += ir.seg;
    }
    r.mean_dice /= r.per_image.size();
    r.mean_jaccard /= r.per_image.size();
    r.mean_seg /= r.per_image.size();
  }
  if (pooled) {
    r.pooled_dice = dice_from_counts(pool);
    r.pooled_jaccard = jaccard_from_counts(pool);
    r.pooled_seg = 0.5 * (r.pooled_dice + r.pooled_jaccard);
  }
  return r;
}

void write_report(const MetricsReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write report: " + csv_path.string());
  csv << "image_id,domain,dice,jaccard,seg_score\n";
  char buf[128];
  for (const ImageResult& ir : report.per_image) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g", ir.dice, ir.jaccard, ir.seg);
    csv << ir.image_id << "," << ir.domain << "," << buf << "\n";
  }
  if (!csv) throw std::runtime_error("report write failed: " + csv_path.string());

  json j;
  j["count"] = report.per_image.size();
  j["means"] = {{"dice", report.mean_dice},
                {"jaccard", report.mean_jaccard},
                {"seg_score", report.mean_seg}};
  if (report.pooled) {
    j["pooled"] = {{"dice", report.pooled_dice},
                   {"jaccard", report.pooled_jaccard},
                   {"seg_score", report.pooled_seg}};
  }
  j["protocol"] = report.protocol;
  j["domains"] = report.domains;
  std::ofstream js(json_path);
  if (!js) throw std::runtime_error("cannot write report: " + json_path.string());
  js << j.dump(2) << "\n";
}

MetricsReport read_report_csv(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("missing file: " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty report: " + csv_path.string());
  if (line != "image_id,domain,dice,jaccard,seg_score")
    throw std::runtime_error("unexpected report header: " + line);

  MetricsReport r;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    ImageResult ir;
    std::getline(ss, ir.image_id, ',');
    std::getline(ss, field, ',');
    ir.domain = std::stoi(field);
    std::getline(ss, field, ',');
    ir.dice = std::stod(field);
    std::getline(ss, field, ',');
    ir.jaccard = std::stod(field);
    std::getline(ss, field, ',');
    ir.seg = std::stod(field);
    r.per_image.push_back(std::move(ir));
  }
  for (const ImageResult& ir : r.per_image) {
    r.mean_dice += ir.dice;
    r.mean_jaccard += ir.jaccard;
    r.mean_seg += ir.seg;
  }
  if (!r.per_image.empty()) {
    r.mean_dice /= r.per_image.size();
    r.mean_jaccard /= r.per_image.size();
    r.mean_seg /= r.per_image.size();
  }
  return r;
}

}  // namespace dcaseg
