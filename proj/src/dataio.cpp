#include "dag/dataio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace dag {

namespace {

static_assert(std::numeric_limits<float>::is_iec559, "DAGF requires IEEE-754 binary32");

void validate_rows(std::size_t rows, std::size_t cols, std::span<const float> values, ErrorKind kind) {
    if (rows == 0 || cols == 0) fail(kind, "feature matrix must have at least one row and column");
    for (std::size_t i = 0; i < rows; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            const float v = values[i * cols + j];
            if (!std::isfinite(v)) fail(kind, "non-finite value in row " + std::to_string(i));
            sq += static_cast<double>(v) * v;
        }
        if (sq == 0.0) fail(kind, "zero-norm feature row " + std::to_string(i));
    }
}

template <typename T>
void put_le(std::ostream& os, T v) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    auto u = std::bit_cast<U>(v);
    char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((u >> (8 * i)) & 0xffu);
    os.write(buf, sizeof(U));
}

template <typename T>
T get_le(const unsigned char* p) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(p[i]) << (8 * i);
    return std::bit_cast<T>(u);
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorKind::io, "read failure on " + path.string());
    return bytes;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    return out;
}

bool parse_int(std::string_view s, long long& out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

FeatureMatrix::FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<float> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows * cols) fail(ErrorKind::invalid_argument, "feature value count does not match shape");
    validate_rows(rows_, cols_, values_, ErrorKind::numeric);
}

FeatureMatrix FeatureMatrix::from_matrix(const Matrix& m) {
    std::vector<float> v(m.values().size());
    std::ranges::transform(m.values(), v.begin(), [](double x) { return static_cast<float>(x); });
    return FeatureMatrix(m.rows(), m.cols(), std::move(v));
}

Matrix FeatureMatrix::to_matrix() const {
    return Matrix(rows_, cols_, std::vector<double>(values_.begin(), values_.end()));
}

std::size_t LabelFile::class_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : labels)
        if (l) n = std::max(n, *l + 1);
    return n;
}

void save_matrix(const FeatureMatrix& m, const std::filesystem::path& path) {
    auto out = open_out(path, std::ios::binary);
    out.write("DAGF", 4);
    put_le(out, matrix_format_version);
    put_le(out, static_cast<std::uint64_t>(m.rows()));
    put_le(out, static_cast<std::uint64_t>(m.cols()));
    for (float v : m.values()) put_le(out, v);
    if (!out) fail(ErrorKind::io, "write failure on " + path.string());
}

FeatureMatrix load_matrix(const std::filesystem::path& path) {
    const auto bytes = read_all(path);
    if (bytes.size() < matrix_header_bytes) fail(ErrorKind::format, "truncated DAGF header in " + path.string());
    if (std::memcmp(bytes.data(), "DAGF", 4) != 0) fail(ErrorKind::format, "bad magic in " + path.string());
    const auto version = get_le<std::uint32_t>(bytes.data() + 4);
    if (version != matrix_format_version)
        fail(ErrorKind::format, "unsupported DAGF version " + std::to_string(version));
    const auto rows = get_le<std::uint64_t>(bytes.data() + 8);
    const auto cols = get_le<std::uint64_t>(bytes.data() + 16);
    const std::uint64_t payload = bytes.size() - matrix_header_bytes;
    if (cols != 0 && rows > payload / 4 / cols)
        fail(ErrorKind::format, "truncated DAGF payload in " + path.string());
    if (payload != rows * cols * 4) fail(ErrorKind::format, "DAGF payload size mismatch in " + path.string());
    std::vector<float> values(rows * cols);
    for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = get_le<float>(bytes.data() + matrix_header_bytes + 4 * i);
    validate_rows(rows, cols, values, ErrorKind::format);
    return FeatureMatrix(rows, cols, std::move(values));
}

LabelFile load_labels(const std::filesystem::path& path, std::size_t m) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    LabelFile lf;
    lf.labels.assign(m, std::nullopt);
    std::vector<bool> seen(m, false);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto where = path.string() + ":" + std::to_string(lineno);
        const auto comma = line.find(',');
        long long idx = 0, label = 0;
        if (comma == std::string::npos || !parse_int(std::string_view(line).substr(0, comma), idx) ||
            !parse_int(std::string_view(line).substr(comma + 1), label))
            fail(ErrorKind::format, "unparsable label line " + where);
        if (idx < 0 || static_cast<std::size_t>(idx) >= m) fail(ErrorKind::format, "index out of range at " + where);
        if (label < -1) fail(ErrorKind::format, "invalid label at " + where);
        if (seen[idx]) fail(ErrorKind::format, "duplicate index at " + where);
        seen[idx] = true;
        if (label >= 0) lf.labels[idx] = static_cast<std::size_t>(label);
    }
    if (in.bad()) fail(ErrorKind::io, "read failure on " + path.string());
    const auto missing = std::ranges::find(seen, false);
    if (missing != seen.end())
        fail(ErrorKind::format, "label file misses index " + std::to_string(missing - seen.begin()));
    return lf;
}

void save_labels(const LabelFile& labels, const std::filesystem::path& path) {
    auto out = open_out(path);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        out << i << ',';
        if (labels.labels[i])
            out << *labels.labels[i];
        else
            out << -1;
        out << '\n';
    }
    if (!out) fail(ErrorKind::io, "write failure on " + path.string());
}

Dataset gen_blobs(std::size_t class_count, std::size_t per_class, std::size_t dim, double separation,
                  double spread, std::uint64_t seed) {
    require(class_count > 0 && per_class > 0 && dim > 0, "gen_blobs: counts must be positive");
    require(spread > 0.0 && std::isfinite(spread), "gen_blobs: spread must be positive");
    require(separation > 0.0 && std::isfinite(separation), "gen_blobs: separation must be positive");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Random directions, orthonormalized while the dimension allows it, so
    // means sit on a sphere of radius separation / sqrt(2).
    Matrix means(class_count, dim);
    for (std::size_t c = 0; c < class_count; ++c) {
        auto mu = means.row(c);
        for (;;) {
            for (auto& v : mu) v = gauss(rng);
            if (c < dim) {
                for (std::size_t p = 0; p < c; ++p) {
                    const double proj = dot(mu, means.row(p));
                    for (std::size_t j = 0; j < dim; ++j) mu[j] -= proj * means(p, j);
                }
            }
            const double n = norm(mu);
            if (n > 1e-6) {
                for (auto& v : mu) v /= n;
                break;
            }
        }
    }
    double min_dist = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < class_count; ++a)
        for (std::size_t b = a + 1; b < class_count; ++b)
            min_dist = std::min(min_dist, std::sqrt(squared_distance(means.row(a), means.row(b))));
    double radius = separation / std::numbers::sqrt2;
    if (class_count > 1) radius = std::max(radius, separation / min_dist);
    // Guard against rounding pushing a pair just below the requested gap.
    radius *= 1.0 + 1e-12;
    for (auto& v : means.values()) v *= radius;

    Matrix x(class_count * per_class, dim);
    LabelFile labels;
    labels.labels.reserve(class_count * per_class);
    for (std::size_t c = 0; c < class_count; ++c) {
        for (std::size_t s = 0; s < per_class; ++s) {
            auto r = x.row(c * per_class + s);
            for (std::size_t j = 0; j < dim; ++j) r[j] = means(c, j) + spread * gauss(rng);
            labels.labels.emplace_back(c);
        }
    }
    return {FeatureMatrix::from_matrix(x), std::move(labels)};
}

Dataset gen_rings(std::size_t class_count, std::size_t per_class, double noise, std::uint64_t seed) {
    require(class_count > 0 && per_class > 0, "gen_rings: counts must be positive");
    require(noise >= 0.0 && std::isfinite(noise), "gen_rings: noise must be non-negative");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);

    Matrix x(class_count * per_class, 2);
    LabelFile labels;
    for (std::size_t c = 0; c < class_count; ++c) {
        for (std::size_t s = 0; s < per_class; ++s) {
            double r = 0.0;
            do {
                r = static_cast<double>(c + 1) + noise * gauss(rng);
            } while (r <= 0.0);
            const double t = angle(rng);
            auto row = x.row(c * per_class + s);
            row[0] = r * std::cos(t);
            row[1] = r * std::sin(t);
            labels.labels.emplace_back(c);
        }
    }
    return {FeatureMatrix::from_matrix(x), std::move(labels)};
}

Split make_split(const LabelFile& labels, const SplitSpec& spec) {
    require(spec.class_count > 0, "make_split: class_count must be positive");
    std::vector<std::vector<std::size_t>> by_class(spec.class_count);
    std::vector<std::size_t> already_unlabelled;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels.labels[i]) {
            already_unlabelled.push_back(i);
            continue;
        }
        const auto c = *labels.labels[i];
        require(c < spec.class_count, "make_split: class id " + std::to_string(c) + " out of range");
        by_class[c].push_back(i);
    }
    std::mt19937_64 rng(spec.seed);
    Split split;
    split.unlabelled = std::move(already_unlabelled);
    for (std::size_t c = 0; c < spec.class_count; ++c) {
        auto& members = by_class[c];
        if (members.size() < spec.labels_per_class)
            fail(ErrorKind::invalid_argument, "make_split: class " + std::to_string(c) + " has only " +
                                                  std::to_string(members.size()) + " samples");
        std::shuffle(members.begin(), members.end(), rng);
        split.labelled.insert(split.labelled.end(), members.begin(), members.begin() + spec.labels_per_class);
        split.unlabelled.insert(split.unlabelled.end(), members.begin() + spec.labels_per_class, members.end());
    }
    std::ranges::sort(split.labelled);
    std::ranges::sort(split.unlabelled);
    return split;
}

std::pair<Dataset, Dataset> hold_out(const Dataset& data, std::size_t test_per_class) {
    require(test_per_class > 0, "hold_out: test_per_class must be positive");
    const auto n_c = data.labels.class_count();
    std::vector<std::size_t> count(n_c, 0);
    for (const auto& l : data.labels.labels) {
        require(l.has_value(), "hold_out: every sample needs a label");
        ++count[*l];
    }
    for (std::size_t c = 0; c < n_c; ++c)
        require(count[c] > test_per_class, "hold_out: class " + std::to_string(c) + " too small");

    const auto d = data.features.cols();
    std::vector<float> train_x, test_x;
    LabelFile train_y, test_y;
    std::vector<std::size_t> seen(n_c, 0);
    for (std::size_t i = 0; i < data.labels.size(); ++i) {
        const auto c = *data.labels.labels[i];
        const bool to_test = seen[c]++ >= count[c] - test_per_class;
        auto row = data.features.row(i);
        (to_test ? test_x : train_x).insert((to_test ? test_x : train_x).end(), row.begin(), row.end());
        (to_test ? test_y : train_y).labels.emplace_back(c);
    }
    Dataset train{FeatureMatrix(train_y.size(), d, std::move(train_x)), std::move(train_y)};
    Dataset test{FeatureMatrix(test_y.size(), d, std::move(test_x)), std::move(test_y)};
    return {std::move(train), std::move(test)};
}

}  // namespace dag
