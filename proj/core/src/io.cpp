#include "msl/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "msl/errors.hpp"

namespace msl {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'M', 'S', 'L', 'C', 'U', 'B', 'E', '1'};

std::ofstream open_out(const fs::path& path, bool binary = false) {
    std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
    if (!os) throw ValidationError("cannot write " + path.string());
    return os;
}

std::ifstream open_in(const fs::path& path, bool binary = false) {
    std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
    if (!is) throw ValidationError("cannot read " + path.string());
    return is;
}

template <class T>
void put(std::ostream& os, T v) {
    static_assert(std::endian::native == std::endian::little, "little-endian host required");
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is, const fs::path& path) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw ValidationError("truncated file " + path.string());
    return v;
}

std::string trim(std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

struct LineReader {
    std::ifstream is;
    fs::path path;
    std::size_t line_no = 0;

    explicit LineReader(const fs::path& p) : is(open_in(p)), path(p) {}

    // next non-empty line split on commas; false at end of file
    bool next(std::vector<std::string>& fields) {
        std::string line;
        while (std::getline(is, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            fields = split(line);
            return true;
        }
        return false;
    }
    [[noreturn]] void fail(const std::string& what) const {
        throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + what);
    }
    std::uint64_t uint(const std::string& s) const {
        std::uint64_t v = 0;
        auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("expected an unsigned integer, got '" + s + "'");
        return v;
    }
    long sint(const std::string& s) const {
        long v = 0;
        auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size()) fail("expected an integer, got '" + s + "'");
        return v;
    }
    double real(const std::string& s) const {
        double v = 0;
        auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
            fail("expected a finite number, got '" + s + "'");
        return v;
    }
};

void write_real(std::ostream& os, double v) {
    std::array<char, 32> buf;
    auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    os.write(buf.data(), r.ptr - buf.data());
}

} // namespace

void write_cube_binary(const fs::path& path, const LidarCube& cube, const SamplingMask* mask) {
    const auto& d = cube.dims();
    if (mask) validate_pairing(cube, *mask);
    auto os = open_out(path, true);
    os.write(kMagic, sizeof kMagic);
    for (auto v : {d.rows, d.cols, d.bands, d.bins}) put<std::uint32_t>(os, std::uint32_t(v));
    put<std::uint8_t>(os, mask ? 1 : 0);
    if (mask)
        for (std::size_t f = 0; f < d.pixels() * d.bands; ++f) put<std::uint8_t>(os, mask->at(f) ? 1 : 0);
    std::uint64_t n = 0;
    for (std::size_t f = 0; f < d.pixels() * d.bands; ++f) n += cube.histogram(f).size();
    put<std::uint64_t>(os, n);
    for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t j = 0; j < d.cols; ++j)
            for (std::size_t l = 0; l < d.bands; ++l)
                for (const auto& e : cube.histogram(i, j, l))
                    for (auto v : {std::uint32_t(i), std::uint32_t(j), std::uint32_t(l), e.bin, e.count})
                        put<std::uint32_t>(os, v);
    if (!os) throw ValidationError("failed writing " + path.string());
}

std::pair<LidarCube, std::optional<SamplingMask>> read_cube_binary(const fs::path& path) {
    auto is = open_in(path, true);
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw ValidationError(path.string() + " is not a binary cube");
    CubeDims d;
    d.rows = get<std::uint32_t>(is, path);
    d.cols = get<std::uint32_t>(is, path);
    d.bands = get<std::uint32_t>(is, path);
    d.bins = get<std::uint32_t>(is, path);
    d.validate();
    std::optional<SamplingMask> mask;
    auto flag = get<std::uint8_t>(is, path);
    if (flag > 1) throw ValidationError("bad mask flag in " + path.string());
    if (flag) {
        mask.emplace(d.rows, d.cols, d.bands, false);
        for (std::size_t i = 0; i < d.rows; ++i)
            for (std::size_t j = 0; j < d.cols; ++j)
                for (std::size_t l = 0; l < d.bands; ++l) {
                    auto b = get<std::uint8_t>(is, path);
                    if (b > 1) throw ValidationError("bad mask byte in " + path.string());
                    mask->set(i, j, l, b != 0);
                }
    }
    LidarCube cube(d);
    auto n = get<std::uint64_t>(is, path);
    for (std::uint64_t k = 0; k < n; ++k) {
        auto i = get<std::uint32_t>(is, path), j = get<std::uint32_t>(is, path), l = get<std::uint32_t>(is, path);
        auto t = get<std::uint32_t>(is, path), c = get<std::uint32_t>(is, path);
        if (i >= d.rows || j >= d.cols || l >= d.bands || t < 1 || t > d.bins)
            throw ValidationError("photon record out of range in " + path.string());
        cube.add(i, j, l, t, c);
    }
    if (is.peek() != std::char_traits<char>::eof()) throw ValidationError("trailing bytes in " + path.string());
    if (mask) validate_pairing(cube, *mask);
    return {std::move(cube), std::move(mask)};
}

void write_cube_csv(const fs::path& path, const LidarCube& cube) {
    const auto& d = cube.dims();
    auto os = open_out(path);
    os << "msl-events," << d.rows << ',' << d.cols << ',' << d.bands << ',' << d.bins << '\n';
    for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t j = 0; j < d.cols; ++j)
            for (std::size_t l = 0; l < d.bands; ++l)
                for (const auto& e : cube.histogram(i, j, l))
                    os << i << ',' << j << ',' << l << ',' << e.bin << ',' << e.count << '\n';
}

LidarCube read_cube_csv(const fs::path& path) {
    LineReader r(path);
    std::vector<std::string> f;
    if (!r.next(f) || f.size() != 5 || f[0] != "msl-events") r.fail("expected header msl-events,R,C,L,T");
    CubeDims d{r.uint(f[1]), r.uint(f[2]), r.uint(f[3]), r.uint(f[4])};
    d.validate();
    LidarCube cube(d);
    while (r.next(f)) {
        if (f.size() != 5) r.fail("expected i,j,band,bin,count");
        auto i = r.uint(f[0]), j = r.uint(f[1]), l = r.uint(f[2]), t = r.uint(f[3]), c = r.uint(f[4]);
        if (i >= d.rows || j >= d.cols || l >= d.bands || t < 1 || t > d.bins) r.fail("event out of range");
        if (c > 0xffffffffull) r.fail("count too large");
        cube.add(i, j, l, std::uint32_t(t), std::uint32_t(c));
    }
    return cube;
}

std::pair<LidarCube, std::optional<SamplingMask>> read_cube(const fs::path& path) {
    char magic[8] = {};
    {
        auto is = open_in(path, true);
        is.read(magic, 8);
    }
    if (std::memcmp(magic, kMagic, 8) == 0) return read_cube_binary(path);
    return {read_cube_csv(path), std::nullopt};
}

void write_mask_csv(const fs::path& path, const SamplingMask& mask) {
    auto os = open_out(path);
    os << "msl-mask," << mask.rows() << ',' << mask.cols() << ',' << mask.bands() << '\n';
    for (std::size_t i = 0; i < mask.rows(); ++i)
        for (std::size_t j = 0; j < mask.cols(); ++j) {
            os << i << ',' << j << ',';
            for (std::size_t l = 0; l < mask.bands(); ++l) os << (mask(i, j, l) ? '1' : '0');
            os << '\n';
        }
}

SamplingMask read_mask_csv(const fs::path& path) {
    LineReader r(path);
    std::vector<std::string> f;
    if (!r.next(f) || f.size() != 4 || f[0] != "msl-mask") r.fail("expected header msl-mask,R,C,L");
    auto R = r.uint(f[1]), C = r.uint(f[2]), L = r.uint(f[3]);
    if (R == 0 || C == 0 || L == 0) r.fail("mask dimensions must be positive");
    SamplingMask m(R, C, L, false);
    std::vector<std::uint8_t> seen(R * C, 0);
    while (r.next(f)) {
        if (f.size() != 3) r.fail("expected i,j,bits");
        auto i = r.uint(f[0]), j = r.uint(f[1]);
        if (i >= R || j >= C) r.fail("pixel out of range");
        if (f[2].size() != L) r.fail("expected one bit per band");
        if (seen[i * C + j]++) r.fail("pixel listed twice");
        for (std::size_t l = 0; l < L; ++l) {
            if (f[2][l] != '0' && f[2][l] != '1') r.fail("bits must be 0 or 1");
            m.set(i, j, l, f[2][l] == '1');
        }
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) r.fail("mask does not list every pixel");
    return m;
}

void write_irf_csv(const fs::path& path, const ImpulseResponse& irf) {
    auto os = open_out(path);
    os << "band,offset,value\n";
    for (std::size_t l = 0; l < irf.bands(); ++l) {
        const auto& b = irf.band(l);
        for (std::size_t k = 0; k < b.samples.size(); ++k) {
            os << l << ',' << b.first_offset + int(k) << ',';
            write_real(os, b.samples[k]);
            os << '\n';
        }
    }
}

ImpulseResponse read_irf_csv(const fs::path& path) {
    LineReader r(path);
    std::vector<std::string> f;
    if (!r.next(f) || f != std::vector<std::string>{"band", "offset", "value"}) r.fail("expected header band,offset,value");
    std::map<std::size_t, ImpulseResponse::Band> bands;
    while (r.next(f)) {
        if (f.size() != 3) r.fail("expected band,offset,value");
        auto l = r.uint(f[0]);
        long off = r.sint(f[1]);
        double v = r.real(f[2]);
        if (v < 0) r.fail("impulse response values must be non-negative");
        auto [it, fresh] = bands.try_emplace(l);
        auto& b = it->second;
        if (fresh) {
            b.first_offset = int(off);
        } else if (off != b.first_offset + long(b.samples.size())) {
            r.fail("offsets of a band must be consecutive");
        }
        b.samples.push_back(v);
    }
    std::vector<ImpulseResponse::Band> out;
    for (std::size_t l = 0; l < bands.size(); ++l) {
        auto it = bands.find(l);
        if (it == bands.end()) throw ValidationError(path.string() + ": bands must be numbered from 0");
        out.push_back(std::move(it->second));
    }
    return ImpulseResponse(std::move(out));
}

void write_points_csv(const fs::path& path, const PointCloud& cloud) {
    auto os = open_out(path);
    os << "x,y,t";
    for (std::size_t l = 0; l < cloud.bands(); ++l) os << ",m_" << l + 1;
    os << '\n';
    for (const auto& p : cloud.points()) {
        os << p.x << ',' << p.y << ',';
        write_real(os, p.t);
        for (double m : p.m) {
            os << ',';
            write_real(os, m);
        }
        os << '\n';
    }
}

PointCloud read_points_csv(const fs::path& path, std::size_t rows, std::size_t cols) {
    LineReader r(path);
    std::vector<std::string> f;
    if (!r.next(f) || f.size() < 4 || f[0] != "x" || f[1] != "y" || f[2] != "t") r.fail("expected header x,y,t,m_1..");
    const std::size_t L = f.size() - 3;
    for (std::size_t l = 0; l < L; ++l)
        if (f[3 + l] != "m_" + std::to_string(l + 1)) r.fail("expected column m_" + std::to_string(l + 1));
    std::vector<Point> pts;
    while (r.next(f)) {
        if (f.size() != L + 3) r.fail("wrong number of columns");
        Point p;
        auto x = r.uint(f[0]), y = r.uint(f[1]);
        if (x >= rows || y >= cols) r.fail("point outside the image");
        p.x = std::uint32_t(x);
        p.y = std::uint32_t(y);
        p.t = r.real(f[2]);
        for (std::size_t l = 0; l < L; ++l) p.m.push_back(r.real(f[3 + l]));
        pts.push_back(std::move(p));
    }
    return PointCloud::from_points(rows, cols, L, pts);
}

void write_points_ply(const fs::path& path, const PointCloud& cloud) {
    auto os = open_out(path);
    auto pts = cloud.points();
    os << "ply\nformat ascii 1.0\nelement vertex " << pts.size() << "\nproperty float x\nproperty float y\n"
       << "property float z\n";
    for (std::size_t l = 0; l < cloud.bands(); ++l) os << "property float r_" << l + 1 << '\n';
    os << "end_header\n";
    for (const auto& p : pts) {
        os << p.x << ' ' << p.y << ' ';
        write_real(os, p.t);
        for (double m : p.m) {
            os << ' ';
            write_real(os, std::exp(m));
        }
        os << '\n';
    }
}

void write_background_csv(const fs::path& path, const BackgroundField& bg) {
    auto os = open_out(path);
    os << "msl-background," << bg.rows() << ',' << bg.cols() << ',' << bg.bands() << '\n';
    for (std::size_t l = 0; l < bg.bands(); ++l)
        for (std::size_t i = 0; i < bg.rows(); ++i) {
            os << l << ',' << i;
            for (std::size_t j = 0; j < bg.cols(); ++j) {
                os << ',';
                write_real(os, bg(i, j, l));
            }
            os << '\n';
        }
}

BackgroundField read_background_csv(const fs::path& path) {
    LineReader r(path);
    std::vector<std::string> f;
    if (!r.next(f) || f.size() != 4 || f[0] != "msl-background") r.fail("expected header msl-background,R,C,L");
    auto R = r.uint(f[1]), C = r.uint(f[2]), L = r.uint(f[3]);
    if (R == 0 || C == 0 || L == 0) r.fail("background dimensions must be positive");
    BackgroundField bg(R, C, L, 0.0);
    std::vector<std::uint8_t> seen(L * R, 0);
    while (r.next(f)) {
        if (f.size() != C + 2) r.fail("expected band,row and one value per column");
        auto l = r.uint(f[0]), i = r.uint(f[1]);
        if (l >= L || i >= R) r.fail("row out of range");
        if (seen[l * R + i]++) r.fail("row listed twice");
        for (std::size_t j = 0; j < C; ++j) bg(i, j, l) = r.real(f[2 + j]);
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) r.fail("background does not list every row");
    return bg;
}

} // namespace msl
