#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ssnls/core.hpp"
#include "ssnls/doas.hpp"
#include "ssnls/hsi.hpp"

namespace ssnls::io {

namespace fs = std::filesystem;

/// Numeric CSV with an optional header row of column names. Lines starting
/// with '#' and blank lines are skipped.
struct CsvTable {
  std::vector<std::string> header;
  Mat values;
};

CsvTable read_csv(const fs::path& path);
void write_csv(const fs::path& path, const Mat& values, const std::vector<std::string>& header = {});

/// Two-column (wavelength_nm, value) CSV with '#' comment lines.
doas::ReferenceSpectrum read_reference_csv(const fs::path& path, const std::string& name = "");
void write_reference_csv(const fs::path& path, const doas::ReferenceSpectrum& ref);

/// `<stem>.csv` holds the normalized dictionary, `<stem>.json` the group
/// offsets, column scales, deformation grid, wavelengths and names.
void save_dictionary_cache(const fs::path& stem, const doas::DeformationDictionary& dd);
doas::DeformationDictionary load_dictionary_cache(const fs::path& stem);

/// `<stem>.csv` holds Y (W rows, one column per pixel), `<stem>.json` the
/// wavelengths and the normalization flag.
void save_scene(const fs::path& stem, const hsi::HsiScene& scene);
hsi::HsiScene load_scene(const fs::path& stem);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace ssnls::io
