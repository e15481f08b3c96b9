#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "bnnlab/core/error.hpp"
#include "bnnlab/core/matrix.hpp"
#include "bnnlab/core/rng.hpp"
#include "bnnlab/experiment/kv_config.hpp"

namespace bnnlab::exp {

struct Dataset {
    Matrix x;
    std::vector<int> y;
    std::size_t classes = 0;

    std::size_t size() const noexcept { return y.size(); }
    std::size_t dim() const noexcept { return x.cols(); }
};

struct DataSplit {
    Dataset train;
    Dataset test;
};

enum class DataSource { Idx, Cifar10, Synthetic };

inline constexpr double kCifarMean[3] = {0.4914, 0.4822, 0.4465};
inline constexpr double kCifarStd[3] = {0.247, 0.243, 0.261};

struct SynthSpec {
    std::size_t train_size = 3000;
    std::size_t test_size = 1000;
    std::size_t dim = 196;
    std::size_t classes = 3;
    std::size_t informative = 8;  // leading coordinates carrying the class signal
    double separation = 4.0;      // distance of each class mean from the origin
    double noise_scale = 1.0;     // standard deviation of the uninformative coordinates
    std::uint64_t seed = 1;
};

struct DatasetSpec {
    DataSource source = DataSource::Synthetic;
    std::filesystem::path train_images, train_labels, test_images, test_labels;  // IDX
    std::vector<std::filesystem::path> train_files, test_files;                  // CIFAR-10
    std::vector<double> mean{0.0};  // per channel, applied after scaling bytes to [0, 1]
    std::vector<double> stddev{1.0};
    std::size_t train_limit = 0;  // 0 keeps every record
    std::size_t test_limit = 0;
    SynthSpec synth;

    void validate() const {
        if (mean.empty() || mean.size() != stddev.size()) {
            throw ContractViolation("normalization needs matching mean and std lists");
        }
        for (double s : stddev) {
            if (!(s > 0.0)) {
                throw ContractViolation("normalization std entries must be positive");
            }
        }
        if (source == DataSource::Synthetic && synth.classes < 2) {
            throw ContractViolation("synthetic data needs at least two classes");
        }
    }
};

namespace detail {

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off,
                          const std::filesystem::path& path) {
    if (off + 4 > b.size()) {
        throw FormatError(path.string() + ": truncated header");
    }
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
           (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

inline double normalize_byte(unsigned char v, double mean, double sd) {
    return (static_cast<double>(v) / 255.0 - mean) / sd;
}

inline std::size_t count_classes(const std::vector<int>& y) {
    int hi = -1;
    for (int v : y) {
        hi = std::max(hi, v);
    }
    return static_cast<std::size_t>(hi + 1);
}

}  // namespace detail

/// IDX image/label pair (the MNIST container). Single-channel normalization.
inline Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        double mean = 0.0, double sd = 1.0) {
    if (!(sd > 0.0)) {
        throw ContractViolation("normalization std must be positive");
    }
    const auto ib = detail::read_bytes(images);
    const auto lb = detail::read_bytes(labels);
    if (detail::be32(ib, 0, images) != 0x00000803u) {
        throw FormatError(images.string() + ": bad image magic");
    }
    if (detail::be32(lb, 0, labels) != 0x00000801u) {
        throw FormatError(labels.string() + ": bad label magic");
    }
    const std::size_t n = detail::be32(ib, 4, images);
    const std::size_t rows = detail::be32(ib, 8, images);
    const std::size_t cols = detail::be32(ib, 12, images);
    const std::size_t nl = detail::be32(lb, 4, labels);
    if (n != nl) {
        throw FormatError("image count " + std::to_string(n) + " does not match label count " +
                          std::to_string(nl));
    }
    const std::size_t pixels = rows * cols;
    if (n == 0 || pixels == 0) {
        throw FormatError(images.string() + ": empty dataset");
    }
    if (ib.size() != 16 + n * pixels) {
        throw FormatError(images.string() + ": expected " + std::to_string(16 + n * pixels) +
                          " bytes, found " + std::to_string(ib.size()));
    }
    if (lb.size() != 8 + n) {
        throw FormatError(labels.string() + ": expected " + std::to_string(8 + n) + " bytes, found " +
                          std::to_string(lb.size()));
    }
    Dataset d;
    d.x = Matrix(n, pixels);
    for (std::size_t i = 0; i < n * pixels; ++i) {
        d.x[i] = detail::normalize_byte(ib[16 + i], mean, sd);
    }
    d.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.y[i] = lb[8 + i];
    }
    d.classes = detail::count_classes(d.y);
    return d;
}

inline constexpr std::size_t kCifarRecord = 3073;
inline constexpr std::size_t kCifarPlane = 1024;

/// CIFAR-10 binary batches: one label byte then 3072 channel-major pixel bytes
/// per record. Each image becomes one row in the same channel-major order.
inline Dataset load_cifar10_bin(const std::vector<std::filesystem::path>& paths,
                                const double (&mean)[3] = kCifarMean,
                                const double (&sd)[3] = kCifarStd) {
    std::vector<unsigned char> all;
    for (const auto& p : paths) {
        const auto b = detail::read_bytes(p);
        if (b.empty() || b.size() % kCifarRecord != 0) {
            throw FormatError(p.string() + ": size " + std::to_string(b.size()) +
                              " is not a positive multiple of " + std::to_string(kCifarRecord));
        }
        all.insert(all.end(), b.begin(), b.end());
    }
    if (all.empty()) {
        throw ContractViolation("no CIFAR-10 files given");
    }
    const std::size_t n = all.size() / kCifarRecord;
    Dataset d;
    d.x = Matrix(n, kCifarRecord - 1);
    d.y.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        const unsigned char* rec = all.data() + r * kCifarRecord;
        if (rec[0] > 9) {
            throw FormatError("record " + std::to_string(r) + " has label " + std::to_string(rec[0]));
        }
        d.y[r] = rec[0];
        for (std::size_t p = 0; p < kCifarRecord - 1; ++p) {
            const std::size_t c = p / kCifarPlane;
            d.x(r, p) = detail::normalize_byte(rec[1 + p], mean[c], sd[c]);
        }
    }
    d.classes = 10;
    return d;
}

/**
 * Gaussian class clusters. Class means live in the first `informative`
 * coordinates at distance `separation` from the origin; those coordinates
 * have unit noise, the remaining ones noise_scale. Labels cycle through the
 * classes. Train and test draw from disjoint streams of the same seed.
 */
inline DataSplit synth_dataset(const SynthSpec& s) {
    if (s.classes < 2) {
        throw ContractViolation("synthetic data needs at least two classes");
    }
    if (s.informative == 0 || s.informative > s.dim) {
        throw ContractViolation("informative dimensions must lie in [1, dim]");
    }
    if (s.train_size == 0 || s.test_size == 0) {
        throw ContractViolation("synthetic split sizes must be positive");
    }
    RngStream mean_rng(s.seed, 0);
    Matrix means(s.classes, s.informative);
    for (std::size_t c = 0; c < s.classes; ++c) {
        double norm2 = 0.0;
        for (std::size_t j = 0; j < s.informative; ++j) {
            means(c, j) = mean_rng.normal();
            norm2 += means(c, j) * means(c, j);
        }
        const double scale = norm2 > 0.0 ? s.separation / std::sqrt(norm2) : 0.0;
        for (std::size_t j = 0; j < s.informative; ++j) {
            means(c, j) *= scale;
        }
    }
    auto draw = [&](std::size_t n, std::uint64_t stream) {
        RngStream rng(s.seed, stream);
        Dataset d;
        d.x = Matrix(n, s.dim);
        d.y.resize(n);
        d.classes = s.classes;
        for (std::size_t i = 0; i < n; ++i) {
            const int c = static_cast<int>(i % s.classes);
            d.y[i] = c;
            for (std::size_t j = 0; j < s.dim; ++j) {
                const double noise = rng.normal();
                d.x(i, j) = j < s.informative ? means(c, j) + noise : s.noise_scale * noise;
            }
        }
        return d;
    };
    return {draw(s.train_size, 1), draw(s.test_size, 2)};
}

inline Dataset head(const Dataset& d, std::size_t limit) {
    if (limit == 0 || limit >= d.size()) {
        return d;
    }
    Dataset out;
    out.x = Matrix(limit, d.dim());
    for (std::size_t i = 0; i < limit * d.dim(); ++i) {
        out.x[i] = d.x[i];
    }
    out.y.assign(d.y.begin(), d.y.begin() + static_cast<std::ptrdiff_t>(limit));
    out.classes = d.classes;
    return out;
}

inline DataSplit load_dataset(const DatasetSpec& spec) {
    spec.validate();
    DataSplit split;
    switch (spec.source) {
    case DataSource::Synthetic:
        split = synth_dataset(spec.synth);
        break;
    case DataSource::Idx:
        split.train = load_idx(spec.train_images, spec.train_labels, spec.mean[0], spec.stddev[0]);
        split.test = load_idx(spec.test_images, spec.test_labels, spec.mean[0], spec.stddev[0]);
        break;
    case DataSource::Cifar10: {
        if (spec.mean.size() != 3) {
            throw ContractViolation("CIFAR-10 normalization needs three channels");
        }
        const double m[3] = {spec.mean[0], spec.mean[1], spec.mean[2]};
        const double s[3] = {spec.stddev[0], spec.stddev[1], spec.stddev[2]};
        split.train = load_cifar10_bin(spec.train_files, m, s);
        split.test = load_cifar10_bin(spec.test_files, m, s);
        break;
    }
    }
    split.train = head(split.train, spec.train_limit);
    split.test = head(split.test, spec.test_limit);
    if (split.train.dim() != split.test.dim()) {
        throw FormatError("train and test inputs differ in dimension");
    }
    const std::size_t classes = std::max(split.train.classes, split.test.classes);
    split.train.classes = split.test.classes = classes;
    return split;
}

inline DatasetSpec parse_dataset_spec(const KvConfig& kv) {
    kv.require_known({"source", "train_images", "train_labels", "test_images", "test_labels",
                      "train_files", "test_files", "mean", "std", "train_limit", "test_limit",
                      "train_size", "test_size", "dim", "classes", "informative", "separation",
                      "noise_scale", "seed"});
    DatasetSpec d;
    const std::string source = kv.get("source");
    if (source == "synthetic") {
        d.source = DataSource::Synthetic;
        d.synth.train_size = kv.get_u64("train_size", d.synth.train_size);
        d.synth.test_size = kv.get_u64("test_size", d.synth.test_size);
        d.synth.dim = kv.get_u64("dim", d.synth.dim);
        d.synth.classes = kv.get_u64("classes", d.synth.classes);
        d.synth.informative = kv.get_u64("informative", d.synth.informative);
        d.synth.separation = kv.get_double("separation", d.synth.separation);
        d.synth.noise_scale = kv.get_double("noise_scale", d.synth.noise_scale);
        d.synth.seed = kv.get_u64("seed", d.synth.seed);
    } else if (source == "idx") {
        d.source = DataSource::Idx;
        d.train_images = kv.get_path("train_images");
        d.train_labels = kv.get_path("train_labels");
        d.test_images = kv.get_path("test_images");
        d.test_labels = kv.get_path("test_labels");
    } else if (source == "cifar10") {
        d.source = DataSource::Cifar10;
        d.mean.assign(std::begin(kCifarMean), std::end(kCifarMean));
        d.stddev.assign(std::begin(kCifarStd), std::end(kCifarStd));
        d.train_files = kv.get_paths("train_files");
        d.test_files = kv.get_paths("test_files");
    } else {
        throw FormatError(kv.source() + ": unknown data source '" + source + "'");
    }
    if (kv.has("mean")) d.mean = kv.get_doubles("mean");
    if (kv.has("std")) d.stddev = kv.get_doubles("std");
    d.train_limit = kv.get_u64("train_limit", 0);
    d.test_limit = kv.get_u64("test_limit", 0);
    d.validate();
    return d;
}

}  // namespace bnnlab::exp
