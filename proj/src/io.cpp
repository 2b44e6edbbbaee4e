#include "ssnls/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ssnls::io {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    require(!ec, ErrorKind::Io, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::Io, "cannot open " + path.string() + " for writing");
  return out;
}

fs::path with_ext(const fs::path& stem, const char* ext) {
  fs::path p = stem;
  p += ext;
  return p;
}

json vec_json(const Vec& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vec json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Index>(v.size()));
}

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, "invalid JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  require(out.good(), ErrorKind::Io, "write failed for " + path.string());
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open " + path.string());
  CsvTable t;
  std::vector<std::vector<double>> rows;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto cells = split(s);
    std::vector<double> row(cells.size());
    bool numeric = true;
    for (size_t i = 0; i < cells.size() && numeric; ++i) numeric = parse_double(cells[i], row[i]);
    if (!numeric) {
      require(rows.empty() && t.header.empty(), ErrorKind::Io,
              path.string() + ":" + std::to_string(lineno) + ": non-numeric value");
      t.header = cells;
      continue;
    }
    require(rows.empty() || row.size() == rows.front().size(), ErrorKind::Io,
            path.string() + ":" + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  const Index cols = rows.empty() ? static_cast<Index>(t.header.size()) : static_cast<Index>(rows.front().size());
  require(t.header.empty() || static_cast<Index>(t.header.size()) == cols, ErrorKind::Io,
          path.string() + ": header width does not match the data");
  t.values.resize(static_cast<Index>(rows.size()), cols);
  for (Index r = 0; r < t.values.rows(); ++r)
    for (Index c = 0; c < cols; ++c) t.values(r, c) = rows[static_cast<size_t>(r)][static_cast<size_t>(c)];
  return t;
}

void write_csv(const fs::path& path, const Mat& values, const std::vector<std::string>& header) {
  require(header.empty() || static_cast<Index>(header.size()) == values.cols(), ErrorKind::Shape,
          "header width does not match the matrix");
  std::string text;
  for (size_t i = 0; i < header.size(); ++i) text += (i ? "," : "") + header[i];
  if (!header.empty()) text += '\n';
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) {
      if (c) text += ',';
      text += format_double(values(r, c));
    }
    text += '\n';
  }
  write_text(path, text);
}

doas::ReferenceSpectrum read_reference_csv(const fs::path& path, const std::string& name) {
  const CsvTable t = read_csv(path);
  require(t.values.cols() == 2, ErrorKind::Io, path.string() + ": expected two columns (wavelength_nm, value)");
  doas::ReferenceSpectrum ref;
  ref.wavelengths = t.values.col(0);
  ref.values = t.values.col(1);
  ref.name = name.empty() ? path.stem().string() : name;
  try {
    ref.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Io, path.string() + ": " + e.what());
  }
  return ref;
}

void write_reference_csv(const fs::path& path, const doas::ReferenceSpectrum& ref) {
  Mat m(ref.wavelengths.size(), 2);
  m.col(0) = ref.wavelengths;
  m.col(1) = ref.values;
  std::string text = "# " + ref.name + "\n";
  text += "wavelength_nm,value\n";
  for (Index r = 0; r < m.rows(); ++r) text += format_double(m(r, 0)) + "," + format_double(m(r, 1)) + "\n";
  write_text(path, text);
}

void save_dictionary_cache(const fs::path& stem, const doas::DeformationDictionary& dd) {
  write_csv(with_ext(stem, ".csv"), dd.dict.entries());
  json meta;
  meta["group_offsets"] = dd.dict.layout().offsets;
  meta["scales"] = vec_json(dd.dict.scales());
  meta["slopes"] = vec_json(dd.grid.slopes);
  meta["offsets"] = vec_json(dd.grid.offsets);
  meta["wavelengths"] = vec_json(dd.wavelengths);
  meta["names"] = dd.names;
  meta["column_order"] = "offset-major, slope fastest";
  write_text(with_ext(stem, ".json"), meta.dump(2) + "\n");
}

doas::DeformationDictionary load_dictionary_cache(const fs::path& stem) {
  const json meta = parse_json_file(with_ext(stem, ".json"));
  const CsvTable t = read_csv(with_ext(stem, ".csv"));
  try {
    GroupLayout layout;
    layout.offsets = meta.at("group_offsets").get<std::vector<Index>>();
    doas::DeformationGrid grid{json_vec(meta.at("slopes")), json_vec(meta.at("offsets"))};
    doas::DeformationDictionary dd{GroupedDictionary(t.values, layout, json_vec(meta.at("scales"))), grid,
                                   json_vec(meta.at("wavelengths")),
                                   meta.at("names").get<std::vector<std::string>>()};
    grid.validate();
    require(dd.wavelengths.size() == dd.dict.rows(), ErrorKind::Shape, "wavelength count does not match rows");
    return dd;
  } catch (const json::exception& e) {
    fail(ErrorKind::Io, "malformed dictionary metadata " + with_ext(stem, ".json").string() + ": " + e.what());
  } catch (const Error& e) {
    fail(ErrorKind::Io, "inconsistent dictionary cache " + stem.string() + ": " + e.what());
  }
}

void save_scene(const fs::path& stem, const hsi::HsiScene& scene) {
  write_csv(with_ext(stem, ".csv"), scene.data);
  json meta;
  meta["normalized"] = scene.normalized;
  if (scene.wavelengths) meta["wavelengths"] = vec_json(*scene.wavelengths);
  write_text(with_ext(stem, ".json"), meta.dump(2) + "\n");
}

hsi::HsiScene load_scene(const fs::path& stem) {
  hsi::HsiScene scene;
  scene.data = read_csv(with_ext(stem, ".csv")).values;
  const fs::path meta_path = with_ext(stem, ".json");
  if (fs::exists(meta_path)) {
    const json meta = parse_json_file(meta_path);
    try {
      scene.normalized = meta.value("normalized", false);
      if (meta.contains("wavelengths")) scene.wavelengths = json_vec(meta.at("wavelengths"));
    } catch (const json::exception& e) {
      fail(ErrorKind::Io, "malformed scene metadata " + meta_path.string() + ": " + e.what());
    }
  }
  try {
    scene.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Io, stem.string() + ": " + e.what());
  }
  return scene;
}

}  // namespace ssnls::io
