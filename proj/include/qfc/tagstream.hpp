#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace qfc {

using timestamp_ps = std::int64_t;

inline constexpr timestamp_ps kPsPerSecond = 1'000'000'000'000;

// Time-ordered detection events of one detector channel.
struct TagStream {
    std::uint16_t channel = 0;
    timestamp_ps duration_ps = 0;
    std::vector<timestamp_ps> tags;
    std::string meta;

    double duration_s() const { return static_cast<double>(duration_ps) / kPsPerSecond; }
    std::size_t size() const { return tags.size(); }
    double rate() const { return duration_ps > 0 ? static_cast<double>(tags.size()) / duration_s() : 0.0; }

    bool is_sorted() const;
    // Throws std::domain_error unless sorted and within [0, duration).
    void validate() const;
};

// Binary format, little-endian:
//   "QTAG" | u16 version | u16 channel | u64 duration_ps | u64 count | count x u64
inline constexpr std::uint16_t kQtagVersion = 1;

void write_qtag(std::ostream& os, const TagStream& s);
TagStream read_qtag(std::istream& is);
void write_qtag_file(const std::string& path, const TagStream& s);
TagStream read_qtag_file(const std::string& path);

// CSV: "# duration_ps=<n> channels=<a,b,..>" line, "channel,timestamp_ps" header, one row per tag.
void write_tag_csv(std::ostream& os, const std::vector<TagStream>& streams);
std::vector<TagStream> read_tag_csv(std::istream& is);
void write_tag_csv_file(const std::string& path, const std::vector<TagStream>& streams);
std::vector<TagStream> read_tag_csv_file(const std::string& path);

}  // namespace qfc
