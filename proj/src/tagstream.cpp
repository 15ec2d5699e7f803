#include "qfc/tagstream.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>

namespace qfc {

bool TagStream::is_sorted() const { return std::is_sorted(tags.begin(), tags.end()); }

void TagStream::validate() const {
    if (duration_ps < 0) throw std::domain_error("TagStream: negative duration");
    if (!is_sorted()) throw std::domain_error("TagStream: timestamps not sorted");
    if (!tags.empty() && (tags.front() < 0 || tags.back() >= duration_ps))
        throw std::domain_error("TagStream: timestamp outside [0, duration)");
}

namespace {

template <typename T>
void put_le(std::ostream& os, T v) {
    std::array<char, sizeof(T)> b{};
    auto u = static_cast<std::make_unsigned_t<T>>(v);
    for (std::size_t k = 0; k < sizeof(T); ++k) b[k] = static_cast<char>((u >> (8 * k)) & 0xff);
    os.write(b.data(), b.size());
}

template <typename T>
T get_le(std::istream& is) {
    std::array<unsigned char, sizeof(T)> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), b.size())) throw std::runtime_error("QTAG: truncated input");
    std::make_unsigned_t<T> u = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) u |= static_cast<std::make_unsigned_t<T>>(b[k]) << (8 * k);
    return static_cast<T>(u);
}

}  // namespace

void write_qtag(std::ostream& os, const TagStream& s) {
    os.write("QTAG", 4);
    put_le<std::uint16_t>(os, kQtagVersion);
    put_le<std::uint16_t>(os, s.channel);
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(s.duration_ps));
    put_le<std::uint64_t>(os, s.tags.size());
    for (auto t : s.tags) put_le<std::uint64_t>(os, static_cast<std::uint64_t>(t));
    if (!os) throw std::runtime_error("QTAG: write failed");
}

TagStream read_qtag(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "QTAG") throw std::runtime_error("QTAG: bad magic");
    const auto version = get_le<std::uint16_t>(is);
    if (version != kQtagVersion) throw std::runtime_error("QTAG: unsupported version " + std::to_string(version));
    TagStream s;
    s.channel = get_le<std::uint16_t>(is);
    s.duration_ps = static_cast<timestamp_ps>(get_le<std::uint64_t>(is));
    const auto n = get_le<std::uint64_t>(is);
    s.tags.resize(n);
    for (auto& t : s.tags) t = static_cast<timestamp_ps>(get_le<std::uint64_t>(is));
    return s;
}

void write_qtag_file(const std::string& path, const TagStream& s) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    write_qtag(os, s);
}

TagStream read_qtag_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_qtag(is);
}

void write_tag_csv(std::ostream& os, const std::vector<TagStream>& streams) {
    timestamp_ps duration = 0;
    for (const auto& s : streams) duration = std::max(duration, s.duration_ps);
    os << "# duration_ps=" << duration << " channels=";
    for (std::size_t k = 0; k < streams.size(); ++k) os << (k ? "," : "") << streams[k].channel;
    os << '\n' << "channel,timestamp_ps\n";
    for (const auto& s : streams)
        for (auto t : s.tags) os << s.channel << ',' << t << '\n';
    if (!os) throw std::runtime_error("CSV: write failed");
}

std::vector<TagStream> read_tag_csv(std::istream& is) {
    std::map<std::uint16_t, TagStream> by_channel;
    timestamp_ps duration = 0;
    std::string line;
    bool header_seen = false;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto pos = line.find("duration_ps=");
            if (pos != std::string::npos) duration = std::stoll(line.substr(pos + 12));
            const auto cpos = line.find("channels=");
            if (cpos != std::string::npos) {
                std::size_t k = cpos + 9;
                while (k < line.size() && line[k] != ' ') {
                    unsigned ch = 0;
                    auto r = std::from_chars(line.data() + k, line.data() + line.size(), ch);
                    if (r.ec != std::errc() || ch > 0xffff) break;
                    by_channel[static_cast<std::uint16_t>(ch)].channel = static_cast<std::uint16_t>(ch);
                    k = static_cast<std::size_t>(r.ptr - line.data());
                    if (k < line.size() && line[k] == ',') ++k;
                }
            }
            continue;
        }
        if (!header_seen) {
            if (line != "channel,timestamp_ps") throw std::runtime_error("CSV: expected header channel,timestamp_ps");
            header_seen = true;
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("CSV: malformed row '" + line + "'");
        unsigned ch = 0;
        timestamp_ps t = 0;
        auto r1 = std::from_chars(line.data(), line.data() + comma, ch);
        auto r2 = std::from_chars(line.data() + comma + 1, line.data() + line.size(), t);
        if (r1.ec != std::errc() || r2.ec != std::errc() || ch > 0xffff)
            throw std::runtime_error("CSV: malformed row '" + line + "'");
        auto& s = by_channel[static_cast<std::uint16_t>(ch)];
        s.channel = static_cast<std::uint16_t>(ch);
        s.tags.push_back(t);
    }
    std::vector<TagStream> out;
    for (auto& [ch, s] : by_channel) {
        s.duration_ps = duration;
        out.push_back(std::move(s));
    }
    return out;
}

void write_tag_csv_file(const std::string& path, const std::vector<TagStream>& streams) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    write_tag_csv(os, streams);
}

std::vector<TagStream> read_tag_csv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_tag_csv(is);
}

}  // namespace qfc
