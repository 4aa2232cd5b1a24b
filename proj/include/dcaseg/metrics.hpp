#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dcaseg/image.hpp"

namespace dcaseg {

// Overlap metrics on binary masks. Both-empty pairs score 1.0 by convention.
double dice_score(const Mask& pred, const Mask& gt);
double jaccard_score(const Mask& pred, const Mask& gt);
// (dice + jaccard) / 2, the per-image segmentation score.
double seg_score(const Mask& pred, const Mask& gt);

struct ChallengeWeights {
  double preliminary = 0.2;
  double final_ = 0.8;
};

// Weighted average of preliminary and final test scores.
double challenge_score(double prelim, double final_score, ChallengeWeights w = {});

struct ImageResult {
  std::string image_id;
  int domain = 0;
  double dice = 0.0;
  double jaccard = 0.0;
  double seg = 0.0;
};

struct MetricsReport {
  std::vector<ImageResult> per_image;
  double mean_dice = 0.0;
  double mean_jaccard = 0.0;
  double mean_seg = 0.0;
  // pooled variant: counts aggregated over all images before scoring
  bool pooled = false;
  double pooled_dice = 0.0;
  double pooled_jaccard = 0.0;
  double pooled_seg = 0.0;
  std::string protocol;                 // experiment kind or free-form label
  std::vector<std::string> domains;     // domain names involved
};

// Builds a report from (pred, gt) pairs; ids/domains parallel the masks.
MetricsReport evaluate_masks(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
                             const std::vector<std::string>& ids,
                             const std::vector<int>& domain_ids,
                             const std::vector<std::string>& domain_names,
                             const std::string& protocol, bool pooled = false);

// CSV (one row per image: image_id, domain, dice, jaccard, seg_score) and a
// JSON summary next to it. Values round-trip to 1e-12.
void write_report(const MetricsReport& report, const std::filesystem::path& csv_path,
                  const std::filesystem::path& json_path);

MetricsReport read_report_csv(const std::filesystem::path& csv_path);

}  // namespace dcaseg
