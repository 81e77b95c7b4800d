// SPDX-License-Identifier: Apache-2.0
#include "ensnet/data.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ensnet/image_io.hpp"
#include "ensnet/rng.hpp"

namespace ensnet {
namespace fs = std::filesystem;

// --------------------------------------------------------------- manifest

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && ws(s.back())) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && ws(s[i])) ++i;
  return s.substr(i);
}

}  // namespace

std::vector<ManifestRow> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != kManifestHeader)
    throw DataError(path.string() + ":1: expected header '" + kManifestHeader + "'");
  std::vector<ManifestRow> rows;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    line = trim(line);
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (f.size() != 5) throw DataError(where + "expected 5 fields, got " + std::to_string(f.size()));
    ManifestRow r;
    r.path = trim(f[0]);
    r.subject_id = trim(f[1]);
    if (r.path.empty()) throw DataError(where + "empty path");
    if (r.subject_id.empty()) throw DataError(where + "empty subject_id");
    const std::string label = trim(f[2]);
    if (!label.empty()) {
      std::size_t pos = 0;
      long v = -1;
      try {
        v = std::stol(label, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != label.size() || v < 0) throw DataError(where + "label '" + label + "' is not a class index");
      r.label = static_cast<std::size_t>(v);
    }
    r.sequence_id = trim(f[3]);
    const std::string frame = trim(f[4]);
    if (!frame.empty()) {
      std::size_t pos = 0;
      try {
        r.frame_index = std::stol(frame, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != frame.size()) throw DataError(where + "frame_index '" + frame + "' is not an integer");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_manifest(const fs::path& path, std::span<const ManifestRow> rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << kManifestHeader << '\n';
  for (const auto& r : rows) {
    out << r.path << ',' << r.subject_id << ',';
    if (r.label) out << *r.label;
    out << ',' << r.sequence_id << ',';
    if (r.frame_index) out << *r.frame_index;
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

Dataset load_manifest(const fs::path& path, const LoadOptions& options) {
  const auto rows = read_manifest(path);
  const fs::path base = path.parent_path();
  Dataset data(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.label && *r.label >= options.num_classes)
      throw DataError(path.string() + ":" + std::to_string(i + 2) + ": label " +
                      std::to_string(*r.label) + " out of range (K=" +
                      std::to_string(options.num_classes) + ")");
  }
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows.size()); ++i) {
    try {
      const auto& r = rows[i];
      const fs::path img = fs::path(r.path).is_absolute() ? fs::path(r.path) : base / r.path;
      data[i] = Sample{image_to_tensor(read_image(img), options.channels, options.image_size),
                       r.subject_id, r.label, r.path, r.sequence_id, r.frame_index};
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return data;
}

// -------------------------------------------------------------- sequences

IngestResult ingest_sequences(const Dataset& frames, std::size_t neutral_label) {
  IngestResult result;
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<const Sample*>> groups;
  for (const auto& s : frames) {
    if (s.sequence_id.empty()) {
      result.samples.push_back(s);
      continue;
    }
    auto [it, inserted] = groups.try_emplace(s.sequence_id);
    if (inserted) order.push_back(s.sequence_id);
    it->second.push_back(&s);
  }
  for (const auto& id : order) {
    auto seq = groups.at(id);
    std::optional<std::size_t> label;
    bool consistent = true;
    for (const Sample* s : seq) {
      if (!s->label) continue;
      if (label && *label != *s->label) consistent = false;
      label = s->label;
    }
    if (seq.size() < 4 || !label || !consistent) {
      ++result.skipped_sequences;
      continue;
    }
    std::stable_sort(seq.begin(), seq.end(), [](const Sample* a, const Sample* b) {
      return a->frame_index.value_or(0) < b->frame_index.value_or(0);
    });
    Sample first = *seq.front();
    first.label = neutral_label;
    result.samples.push_back(std::move(first));
    for (std::size_t i = seq.size() - 3; i < seq.size(); ++i) {
      Sample s = *seq[i];
      s.label = label;
      result.samples.push_back(std::move(s));
    }
  }
  return result;
}

// ------------------------------------------------------------------ folds

bool subject_less(const std::string& a, const std::string& b) {
  const auto numeric = [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
  };
  if (numeric(a) && numeric(b)) {
    const auto strip = [](const std::string& s) {
      const auto nz = s.find_first_not_of('0');
      return nz == std::string::npos ? std::string("0") : s.substr(nz);
    };
    const std::string x = strip(a), y = strip(b);
    if (x.size() != y.size()) return x.size() < y.size();
    if (x != y) return x < y;
  }
  return a < b;
}

std::vector<std::string> FoldAssignment::subjects_in(std::size_t fold) const {
  std::vector<std::string> out;
  for (const auto& s : sorted_subjects)
    if (fold_of_subject.at(s) == fold) out.push_back(s);
  return out;
}

FoldAssignment assign_folds(std::vector<std::string> subjects) {
  std::sort(subjects.begin(), subjects.end(), subject_less);
  for (std::size_t i = 1; i < subjects.size(); ++i)
    if (subjects[i] == subjects[i - 1]) throw DataError("duplicate subject id '" + subjects[i] + "'");
  if (subjects.size() < kNumFolds)
    throw DataError("fold assignment needs >= 10 subjects, got " + std::to_string(subjects.size()));
  FoldAssignment a;
  for (std::size_t r = 0; r < subjects.size(); ++r) a.fold_of_subject[subjects[r]] = r % kNumFolds + 1;
  a.sorted_subjects = std::move(subjects);
  return a;
}

TrialSplit split_trial(std::size_t t) {
  if (t < 1 || t > kNumFolds) throw DataError("test fold must be in 1..10, got " + std::to_string(t));
  TrialSplit s;
  s.test = t;
  s.val = t % kNumFolds + 1;
  std::size_t n = 0;
  for (std::size_t f = 1; f <= kNumFolds; ++f) {
    if (f == s.test || f == s.val) continue;
    (n < 4 ? s.labelled[n] : s.unlabelled[n - 4]) = f;
    ++n;
  }
  return s;
}

Dataset select_folds(const Dataset& data, const FoldAssignment& assignment,
                     std::span<const std::size_t> folds) {
  Dataset out;
  for (const auto& s : data) {
    auto it = assignment.fold_of_subject.find(s.subject_id);
    if (it == assignment.fold_of_subject.end())
      throw DataError("subject '" + s.subject_id + "' has no fold");
    if (std::find(folds.begin(), folds.end(), it->second) != folds.end()) out.push_back(s);
  }
  return out;
}

std::vector<std::string> subjects_of(const Dataset& data) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& s : data)
    if (seen.insert(s.subject_id).second) out.push_back(s.subject_id);
  return out;
}

template <typename T>
Tensor<T> batch_images(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ShapeError("batch_images: empty batch");
  const Shape& s = data.at(indices.front()).image.shape();
  const std::size_t per = shape_size(s);
  Tensor<T> batch({indices.size(), s[0], s[1], s[2]});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& img = data.at(indices[i]).image;
    if (img.shape() != s) throw ShapeError("batch_images: images differ in shape");
    std::copy(img.values().begin(), img.values().end(), batch.data() + i * per);
  }
  return batch;
}

template Tensor<float> batch_images(const Dataset&, std::span<const std::size_t>);
template Tensor<double> batch_images(const Dataset&, std::span<const std::size_t>);

// -------------------------------------------------------------- synthetic

void SyntheticSpec::validate() const {
  if (num_classes < 1 || num_subjects < 1 || samples_per_subject_class < 1)
    throw DataError("synthetic spec counts must be >= 1");
  if (subject_noise < 0 || pattern_noise < 0) throw DataError("synthetic noise must be >= 0");
  if (image_size < 8) throw DataError("synthetic image_size must be >= 8");
}

namespace {

struct SubjectDistortion {
  double rotation = 0;  // radians
  double scale = 1;
  double shift_u = 0, shift_v = 0;  // fraction of side
  double contrast = 1;
  double brightness = 0;
  struct Wave {
    double amp, freq, cos_t, sin_t, phase;
  };
  std::vector<Wave> field;
};

SubjectDistortion draw_distortion(const SyntheticSpec& spec, std::size_t subject) {
  auto rng = make_stream(spec.seed, {0x5b1ec7, subject});
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double s = spec.subject_noise;
  SubjectDistortion d;
  d.rotation = s * n01(rng) * (60.0 * std::numbers::pi / 180.0);
  d.scale = std::exp(s * n01(rng) * 0.5);
  d.shift_u = s * n01(rng) * 0.2;
  d.shift_v = s * n01(rng) * 0.2;
  d.contrast = std::exp(s * n01(rng));
  d.brightness = s * n01(rng) * 0.3;
  for (int i = 0; i < 3; ++i) {
    const double t = u01(rng) * std::numbers::pi;
    d.field.push_back({s * 0.5 / std::sqrt(3.0) * n01(rng), 0.5 + 1.5 * u01(rng), std::cos(t),
                       std::sin(t), 2 * std::numbers::pi * u01(rng)});
  }
  return d;
}

double pattern_value(std::size_t k, std::size_t K, double u, double v) {
  const double theta = std::numbers::pi * static_cast<double>(k) / static_cast<double>(K);
  const double freq = 4.0 + 2.0 * static_cast<double>(k % 2);
  const double env = std::exp(-(u * u + v * v) / (2 * 0.25 * 0.25));
  return 0.5 + 0.45 * env * std::cos(2 * std::numbers::pi * freq * (u * std::cos(theta) + v * std::sin(theta)));
}

float quantize(double v) {
  return static_cast<float>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)) / 255.0);
}

std::string subject_name(const SyntheticSpec& spec, std::size_t s) {
  std::ostringstream os;
  os << spec.subject_prefix << std::setw(3) << std::setfill('0') << (s + 1);
  return os.str();
}

}  // namespace

Tensor<float> synthetic_prototype(std::size_t k, const SyntheticSpec& spec) {
  const std::size_t S = spec.image_size;
  const double c = (static_cast<double>(S) - 1) / 2;
  Tensor<float> img({1, S, S});
  for (std::size_t y = 0; y < S; ++y)
    for (std::size_t x = 0; x < S; ++x)
      img[y * S + x] = quantize(pattern_value(k, spec.num_classes, (x - c) / S, (y - c) / S));
  return img;
}

Dataset synthesize(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t S = spec.image_size;
  const double c = (static_cast<double>(S) - 1) / 2;
  Dataset data;
  for (std::size_t subj = 0; subj < spec.num_subjects; ++subj) {
    const SubjectDistortion d = draw_distortion(spec, subj);
    const double cr = std::cos(d.rotation), sr = std::sin(d.rotation);
    const std::string sid = subject_name(spec, subj);
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
      for (std::size_t m = 0; m < spec.samples_per_subject_class; ++m) {
        auto rng = make_stream(spec.seed, {0x9a77e2, subj, k, m});
        std::normal_distribution<double> n01(0.0, 1.0);
        Tensor<float> img({1, S, S});
        for (std::size_t y = 0; y < S; ++y) {
          for (std::size_t x = 0; x < S; ++x) {
            const double u = (x - c) / S, v = (y - c) / S;
            // Inverse pose: pattern coordinates seen at output pixel (u,v).
            const double du = (u - d.shift_u) / d.scale, dv = (v - d.shift_v) / d.scale;
            const double pu = cr * du + sr * dv, pv = -sr * du + cr * dv;
            double val = 0.5 + d.contrast * (pattern_value(k, spec.num_classes, pu, pv) - 0.5) +
                         d.brightness;
            for (const auto& w : d.field)
              val += w.amp * std::cos(2 * std::numbers::pi * w.freq * (u * w.cos_t + v * w.sin_t) + w.phase);
            if (spec.pattern_noise > 0) val += spec.pattern_noise * n01(rng);
            img[y * S + x] = quantize(val);
          }
        }
        std::ostringstream name;
        name << "images/" << sid << "_c" << k << "_" << m << ".pgm";
        data.push_back(Sample{std::move(img), sid, k, name.str(), "", std::nullopt});
      }
    }
  }
  return data;
}

double nearest_prototype_accuracy(const Dataset& data, const SyntheticSpec& spec) {
  if (data.empty()) return 0.0;
  std::vector<Tensor<float>> protos;
  for (std::size_t k = 0; k < spec.num_classes; ++k) protos.push_back(synthetic_prototype(k, spec));
  std::size_t correct = 0;
  for (const auto& s : data) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < protos.size(); ++k) {
      double dist = 0;
      for (std::size_t i = 0; i < s.image.size(); ++i) {
        const double e = s.image[i] - protos[k][i];
        dist += e * e;
      }
      if (dist < best_d) {
        best_d = dist;
        best = k;
      }
    }
    if (s.label && *s.label == best) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

SyntheticResult gen_synthetic(const SyntheticSpec& spec, const fs::path& out_dir) {
  const Dataset data = synthesize(spec);
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw DataError("cannot create " + (out_dir / "images").string() + ": " + ec.message());
  std::vector<ManifestRow> rows;
  rows.reserve(data.size());
  for (const auto& s : data) {
    write_pgm(out_dir / s.source_id, tensor_to_image(s.image));
    rows.push_back({s.source_id, s.subject_id, s.label, "", std::nullopt});
  }
  SyntheticResult r{out_dir / "manifest.csv", data.size(), nearest_prototype_accuracy(data, spec)};
  write_manifest(r.manifest, rows);
  return r;
}

}  // namespace ensnet
