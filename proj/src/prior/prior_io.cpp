#include "priordepth/prior/prior_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "priordepth/core/errors.hpp"

namespace priordepth {

void write_prior_csv(const std::filesystem::path& path, const SparsePrior& prior) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write prior file " + path.string());
  os << "x,y,depth\n";
  char buf[128];
  for (const auto& p : prior.points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", p.x, p.y, p.depth);
    os << buf;
  }
  if (!os) throw DataError("write failed for prior file " + path.string());
}

namespace {

[[noreturn]] void malformed(const std::filesystem::path& path, int line, const std::string& why) {
  throw DataError("malformed prior file " + path.string() + ": line " + std::to_string(line) +
                  ": " + why);
}

double parse_field(const std::string& field, const std::filesystem::path& path, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    malformed(path, line, "not a number: '" + field + "'");
  }
  if (used != field.size()) malformed(path, line, "trailing characters in '" + field + "'");
  return v;
}

}  // namespace

SparsePrior read_prior_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open prior file " + path.string());
  SparsePrior prior;
  prior.source_image_id = path.stem().string();
  std::string line;
  int line_no = 0;
  if (!std::getline(is, line)) malformed(path, 1, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,y,depth") malformed(path, 1, "expected header 'x,y,depth'");
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string fx, fy, fd, extra;
    if (!std::getline(fields, fx, ',') || !std::getline(fields, fy, ',') ||
        !std::getline(fields, fd, ','))
      malformed(path, line_no, "expected 3 comma-separated fields");
    if (std::getline(fields, extra, ','))
      malformed(path, line_no, "expected 3 comma-separated fields");
    PriorPoint p;
    p.x = parse_field(fx, path, line_no);
    p.y = parse_field(fy, path, line_no);
    p.depth = parse_field(fd, path, line_no);
    if (!std::isfinite(p.depth) || p.depth <= 0.0)
      malformed(path, line_no, "depth must be finite and positive");
    prior.points.push_back(p);
  }
  return prior;
}

}  // namespace priordepth
