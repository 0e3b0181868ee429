#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

#include "dermaug/error.hpp"
#include "dermaug/imagedata.hpp"
#include "dermaug/kvdoc.hpp"

namespace dermaug {
namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::vector<LabelRow> load_labels_csv(std::string_view text) {
  std::vector<LabelRow> rows;
  std::size_t line_no = 0;
  bool saw_header = false;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (!saw_header) {
      if (line != kLabelsHeader)
        throw ParseError(line_no, "expected header '" + std::string(kLabelsHeader) + "'");
      saw_header = true;
      continue;
    }
    if (line.empty()) continue;

    const auto fields = split_commas(line);
    if (fields.size() != 1 + kNumClasses)
      throw ParseError(line_no, "expected 8 fields, found " + std::to_string(fields.size()));
    LabelRow row;
    row.id = std::string(fields[0]);
    if (row.id.empty()) throw ParseError(line_no, "empty image id");
    for (int k = 0; k < kNumClasses; ++k) {
      const auto f = fields[1 + k];
      double v = 0.0;
      const auto [end, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || end != f.data() + f.size() || f.empty() || !std::isfinite(v))
        throw ParseError(line_no, "non-numeric value '" + std::string(f) + "' in column " +
                                      std::string(kClassNames[k]));
      if (v < 0.0 || v > 1.0)
        throw ParseError(line_no, "value out of [0,1] in column " + std::string(kClassNames[k]));
      row.label.probs[k] = v;
    }
    if (std::abs(row.label.sum() - 1.0) > 1e-6)
      throw ParseError(line_no, "row for '" + row.id + "' sums to " + format_double(row.label.sum()) +
                                    ", expected 1");
    rows.push_back(std::move(row));
  }
  if (!saw_header) throw ParseError(1, "empty labels file");
  return rows;
}

std::string write_labels_csv(std::span<const LabelRow> rows) {
  std::string out(kLabelsHeader);
  out += '\n';
  for (const auto& r : rows) {
    out += r.id;
    for (double p : r.label.probs) {
      out += ',';
      out += format_double(p);
    }
    out += '\n';
  }
  return out;
}

Dataset load_labeled_dataset(const std::filesystem::path& labels_csv,
                             const std::filesystem::path& image_dir) {
  const auto rows = load_labels_csv(read_text_file(labels_csv));
  Dataset ds;
  for (const auto& row : rows) {
    auto path = image_dir / (row.id + ".ppm");
    if (!std::filesystem::exists(path)) path = image_dir / (row.id + ".png");
    if (!std::filesystem::exists(path))
      throw DataError("no image for '" + row.id + "' in '" + image_dir.string() + "'");
    ds.add({row.id, read_image_file(path), row.label});
  }
  return ds;
}

Dataset load_unlabeled_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir))
    throw DataError("unlabeled directory '" + dir.string() + "' does not exist");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto ext = e.path().extension();
    if (e.is_regular_file() && (ext == ".ppm" || ext == ".png")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  Dataset ds;
  for (const auto& f : files) ds.add({f.stem().string(), read_image_file(f), std::nullopt});
  return ds;
}

}  // namespace dermaug
