#include "vsr/text.hpp"

#include "vsr/error.hpp"

namespace vsr {

namespace {

bool is_space(std::string_view cp) {
    if (cp.size() == 1) {
        const char c = cp[0];
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
    }
    // U+3000 ideographic space and U+00A0 no-break space.
    return cp == "\xE3\x80\x80" || cp == "\xC2\xA0";
}

}  // namespace

std::vector<std::string> utf8_chars(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto lead = static_cast<unsigned char>(text[i]);
        std::size_t len = 0;
        if (lead < 0x80) len = 1;
        else if ((lead >> 5) == 0x6) len = 2;
        else if ((lead >> 4) == 0xE) len = 3;
        else if ((lead >> 3) == 0x1E) len = 4;
        else throw DataError("invalid UTF-8 lead byte at offset " + std::to_string(i));
        if (i + len > text.size()) throw DataError("truncated UTF-8 sequence at offset " + std::to_string(i));
        for (std::size_t k = 1; k < len; ++k) {
            if ((static_cast<unsigned char>(text[i + k]) >> 6) != 0x2) {
                throw DataError("invalid UTF-8 continuation byte at offset " + std::to_string(i + k));
            }
        }
        std::string_view cp = text.substr(i, len);
        if (!is_space(cp)) out.emplace_back(cp);
        i += len;
    }
    return out;
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.empty() || tokens_[0] != kBlank) throw ConfigError("vocabulary must start with <blank>");
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
            throw ConfigError("duplicate vocabulary token '" + tokens_[i] + "'");
        }
    }
    const auto u = index_.find(kUnk);
    const auto s = index_.find(kSosEos);
    if (u == index_.end() || s == index_.end()) throw ConfigError("vocabulary needs <unk> and <sos/eos>");
    unk_ = u->second;
    sos_eos_ = s->second;
}

Vocabulary Vocabulary::from_characters(const std::vector<std::string>& chars) {
    std::vector<std::string> tokens{kBlank, kUnk};
    tokens.insert(tokens.end(), chars.begin(), chars.end());
    tokens.emplace_back(kSosEos);
    return Vocabulary(std::move(tokens));
}

const std::string& Vocabulary::token(int id) const {
    if (!contains(id)) throw DataError("token id " + std::to_string(id) + " out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::id(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    return it == index_.end() ? unk_ : it->second;
}

std::vector<int> Vocabulary::regular_ids() const {
    std::vector<int> ids;
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!is_special(static_cast<int>(i))) ids.push_back(static_cast<int>(i));
    }
    return ids;
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
    std::vector<int> ids;
    for (const std::string& ch : utf8_chars(text)) ids.push_back(id(ch));
    return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
        if (!is_special(id)) out += token(id);
    }
    return out;
}

}  // namespace vsr
