#include <fstream>
#include <iomanip>

#include "json.hpp"
#include "pilotwave/experiment.hpp"

namespace pilotwave {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream f(path);
  if (!f) throw ValidationError("cannot open " + path.string() + " for writing");
  f << std::setprecision(17);
  return f;
}

std::string set_to_string(const IndexSet& s) {
  std::string out;
  for (int p : s.members()) {
    if (!out.empty()) out += ' ';
    out += std::to_string(p);
  }
  return out.empty() ? "-" : out;
}

}  // namespace

void write_ensemble_csv(const std::filesystem::path& path, const EnsembleResult& result,
                        int space_dim) {
  std::ofstream f = open_out(path);
  f << "t,walker,particle,axis,value,law,flags\n";
  const char* law = to_string(result.law.kind);
  for (std::size_t ti = 0; ti < result.sample_times.size(); ++ti) {
    const double t = result.sample_times[ti];
    for (std::size_t w = 0; w < result.samples[ti].size(); ++w) {
      const std::vector<double>& row = result.samples[ti][w];
      const char* flag = to_string(result.aborts[w]);
      const int pts = static_cast<int>(row.size()) / space_dim;
      for (int p = 0; p < pts; ++p)
        for (int a = 0; a < space_dim; ++a)
          f << t << ',' << w << ',' << p + 1 << ',' << a << ',' << row[p * space_dim + a] << ','
            << law << ',' << flag << '\n';
    }
  }
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& trajectory,
                          int space_dim) {
  std::ofstream f = open_out(path);
  f << "t,particle,axis,value,law,flags\n";
  const char* law = to_string(trajectory.law.kind);
  const char* flag = to_string(trajectory.abort);
  for (std::size_t ti = 0; ti < trajectory.times.size(); ++ti) {
    const std::vector<double>& q = trajectory.configs[ti];
    const int pts = static_cast<int>(q.size()) / space_dim;
    for (int p = 0; p < pts; ++p)
      for (int a = 0; a < space_dim; ++a)
        f << trajectory.times[ti] << ',' << p + 1 << ',' << a << ',' << q[p * space_dim + a]
          << ',' << law << ',' << flag << '\n';
  }
}

void write_jump_events_csv(const std::filesystem::path& path,
                           std::span<const JumpEvent> events) {
  std::ofstream f = open_out(path);
  f << "t,src_set,dst_set,particle,face,coords\n";
  for (const JumpEvent& e : events) {
    f << e.time << ',' << set_to_string(e.src_set) << ',' << set_to_string(e.dst_set) << ','
      << e.particle << ',' << e.face_index;
    for (double c : e.coords) f << ',' << c;
    f << '\n';
  }
}

void write_sector_histogram_json(const std::filesystem::path& path, const SectorBinning& binning,
                                 std::span<const std::size_t> counts) {
  nlohmann::json out;
  for (int mask = 0; mask < binning.num_sectors(); ++mask) {
    const int off = binning.sector_offset(static_cast<uint32_t>(mask));
    const int cnt = binning.sector_bin_count(static_cast<uint32_t>(mask));
    nlohmann::json sector;
    sector["expected_mass"] = std::vector<double>(binning.expected_masses().begin() + off,
                                                  binning.expected_masses().begin() + off + cnt);
    sector["counts"] =
        std::vector<std::size_t>(counts.begin() + off, counts.begin() + off + cnt);
    out[std::to_string(mask)] = std::move(sector);
  }
  std::ofstream f = open_out(path);
  f << out.dump(2) << '\n';
}

}  // namespace pilotwave
