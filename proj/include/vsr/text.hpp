#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vsr {

// Splits UTF-8 text into code points (each returned as its UTF-8 bytes),
// dropping whitespace. Invalid sequences throw DataError.
std::vector<std::string> utf8_chars(std::string_view text);

// Character-level token inventory. Ids are dense: 0 = <blank> (CTC),
// 1 = <unk>, regular characters, and a final shared <sos/eos>.
class Vocabulary {
public:
    static constexpr const char* kBlank = "<blank>";
    static constexpr const char* kUnk = "<unk>";
    static constexpr const char* kSosEos = "<sos/eos>";

    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> tokens);
    static Vocabulary from_characters(const std::vector<std::string>& chars);

    std::size_t size() const { return tokens_.size(); }
    int blank() const { return 0; }
    int unk() const { return unk_; }
    int sos_eos() const { return sos_eos_; }
    bool is_special(int id) const { return id == 0 || id == unk_ || id == sos_eos_; }
    bool contains(int id) const { return id >= 0 && static_cast<std::size_t>(id) < tokens_.size(); }

    const std::string& token(int id) const;
    int id(std::string_view token) const;
    const std::vector<std::string>& tokens() const { return tokens_; }
    // Regular (non-special) ids in increasing order.
    std::vector<int> regular_ids() const;

    std::vector<int> encode(std::string_view text) const;
    // Special ids are dropped.
    std::string decode(std::span<const int> ids) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    int unk_ = -1;
    int sos_eos_ = -1;
};

}  // namespace vsr
