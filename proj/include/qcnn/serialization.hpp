#pragma once

// File formats: little-endian binary helpers, stable hashing, CSV traces and
// JSON views of architectures.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "qcnn/circuit.hpp"
#include "qcnn/errors.hpp"
#include "qcnn/train.hpp"

namespace qcnn {

using json = nlohmann::json;

inline constexpr const char* kCodeVersion = "1.0.0";

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string() + " for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, std::string_view bytes) {
    std::error_code ec;
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + p.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + p.string());
}

inline std::string file_hash(const std::filesystem::path& p) { return hex64(fnv1a(read_file(p))); }

// Little-endian encoding, independent of host byte order.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void bytes(std::string_view s) { buf_.append(s); }
    const std::string& str() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() {
        const auto s = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
        return v;
    }
    std::uint64_t u64() {
        const auto s = take(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[static_cast<std::size_t>(i)]);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string_view bytes(std::size_t n) { return take(n); }
    std::size_t remaining() const { return data_.size() - pos_; }

private:
    std::string_view take(std::size_t n) {
        if (pos_ + n > data_.size()) throw IoError("truncated binary record");
        const auto s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::string_view data_;
    std::size_t pos_ = 0;
};

inline void write_amplitudes(ByteWriter& w, const Statevector& s) {
    for (const cplx& a : s.amplitudes()) {
        w.f64(a.real());
        w.f64(a.imag());
    }
}

inline Statevector read_amplitudes(ByteReader& r, std::size_t n_qubits) {
    std::vector<cplx> amps(std::size_t{1} << n_qubits);
    for (cplx& a : amps) {
        const double re = r.f64();
        const double im = r.f64();
        a = {re, im};
    }
    return Statevector(n_qubits, std::move(amps));
}

/// Shortest round-trip decimal form; "nan" for missing values.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline constexpr const char* kTraceHeader = "epoch,train_loss,test_loss,train_acc,test_acc";

inline std::string trace_csv(const TrainingTrace& trace) {
    std::ostringstream os;
    os << kTraceHeader << '\n';
    for (const auto& r : trace.epochs)
        os << r.epoch << ',' << format_double(r.train_loss) << ',' << format_double(r.test_loss) << ','
           << format_double(r.train_accuracy) << ',' << format_double(r.test_accuracy) << '\n';
    return os.str();
}

inline std::vector<EpochMetrics> parse_trace_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kTraceHeader) throw IoError("trace CSV: unexpected header '" + line + "'");
    std::vector<EpochMetrics> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 5) throw IoError("trace CSV: malformed row '" + line + "'");
        auto num = [](const std::string& s) { return s == "nan" ? std::nan("") : std::stod(s); };
        rows.push_back({static_cast<std::size_t>(std::stoull(cells[0])), num(cells[1]), num(cells[2]), num(cells[3]),
                        num(cells[4])});
    }
    return rows;
}

inline std::string to_string(Axis a) {
    switch (a) {
        case Axis::X: return "X";
        case Axis::Y: return "Y";
        case Axis::Z: return "Z";
        case Axis::XX: return "XX";
        case Axis::YY: return "YY";
        case Axis::ZZ: return "ZZ";
    }
    return "?";
}

inline json to_json(const QcnnArchitecture& arch) {
    json layers = json::array();
    for (const Layer& layer : arch.layers()) {
        json blocks = json::array();
        for (const Block& b : layer.blocks) {
            json rots = json::array();
            for (const Rotation& r : b.rotations)
                rots.push_back({{"axis", to_string(r.axis)},
                                {"local_qubit", r.local_qubit},
                                {"controlled", r.controlled},
                                {"param", r.param}});
            blocks.push_back({{"qubits", b.qubits}, {"rotations", rots}});
        }
        layers.push_back({{"kind", layer.kind == LayerKind::conv ? "conv" : "pool"},
                          {"blocks", blocks},
                          {"discarded", layer.discarded}});
    }
    return {{"n_qubits", arch.n_qubits()},
            {"total_params", arch.total_params()},
            {"target_qubits", arch.target_qubits()},
            {"attention_candidates", arch.attention_candidates()},
            {"n_attention_max", arch.n_attention_max()},
            {"bit_convention", "qubit 0 is the most significant bit of the amplitude index"},
            {"layers", layers}};
}

}  // namespace qcnn
