#include "fedrap/report.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace fedrap {

std::string to_json_line(const RoundReport& r) {
  nlohmann::ordered_json j;
  j["round"] = r.round;
  j["variant"] = r.variant;
  j["hr10"] = r.hr10;
  j["ndcg10"] = r.ndcg10;
  j["mean_loss"] = r.mean_loss;
  j["c_frac_gt_1e1"] = r.c_frac_gt_1e1;
  j["c_frac_gt_1e2"] = r.c_frac_gt_1e2;
  j["nonzero_C_entries"] = r.nonzero_c_entries;
  j["bytes_up_estimate"] = r.bytes_up_estimate;
  j["participants"] = r.participants;
  j["lambda"] = r.lambda;
  j["mu"] = r.mu;
  j["full_hr10"] = r.full_hr10 ? nlohmann::ordered_json(*r.full_hr10) : nlohmann::ordered_json(nullptr);
  j["full_ndcg10"] = r.full_ndcg10 ? nlohmann::ordered_json(*r.full_ndcg10) : nlohmann::ordered_json(nullptr);
  j["dp"] = {{"enabled", r.dp.enabled}, {"tau", r.dp.tau}, {"z", r.dp.z},
             {"eta", r.dp.eta},         {"n_s", r.dp.n_s}, {"sigma", r.dp.sigma}};
  return j.dump();
}

RoundReport parse_report_line(std::string_view line) {
  auto j = nlohmann::json::parse(line);
  RoundReport r;
  r.round = j.at("round").get<int>();
  r.variant = j.at("variant").get<std::string>();
  r.hr10 = j.at("hr10").get<double>();
  r.ndcg10 = j.at("ndcg10").get<double>();
  r.mean_loss = j.at("mean_loss").get<double>();
  r.c_frac_gt_1e1 = j.at("c_frac_gt_1e1").get<double>();
  r.c_frac_gt_1e2 = j.at("c_frac_gt_1e2").get<double>();
  r.nonzero_c_entries = j.at("nonzero_C_entries").get<std::size_t>();
  r.bytes_up_estimate = j.at("bytes_up_estimate").get<double>();
  r.participants = j.value("participants", 0);
  r.lambda = j.value("lambda", 0.0);
  r.mu = j.value("mu", 0.0);
  if (j.contains("full_hr10") && !j["full_hr10"].is_null()) r.full_hr10 = j["full_hr10"].get<double>();
  if (j.contains("full_ndcg10") && !j["full_ndcg10"].is_null()) {
    r.full_ndcg10 = j["full_ndcg10"].get<double>();
  }
  if (j.contains("dp")) {
    const auto& dp = j["dp"];
    r.dp.enabled = dp.value("enabled", false);
    r.dp.tau = dp.value("tau", 0.0);
    r.dp.z = dp.value("z", 0.0);
    r.dp.eta = dp.value("eta", 0.0);
    r.dp.n_s = dp.value("n_s", 0);
    r.dp.sigma = dp.value("sigma", 0.0);
  }
  return r;
}

std::vector<RoundReport> read_report_lines(std::istream& in) {
  std::vector<RoundReport> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_report_line(line));
  }
  return out;
}

std::vector<RoundReport> read_report_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report file " + path.string());
  return read_report_lines(in);
}

}  // namespace fedrap
