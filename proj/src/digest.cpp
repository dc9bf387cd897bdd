#include "reval/digest.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <memory>
#include <stdexcept>

#include "reval/errors.hpp"

namespace reval {

namespace {

struct DigestContext {
    EVP_MD_CTX* ctx;
    DigestContext() : ctx(EVP_MD_CTX_new()) {
        if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
            throw std::runtime_error("sha256 init failed");
        }
    }
    ~DigestContext() { EVP_MD_CTX_free(ctx); }

    void update(const char* data, std::size_t len) {
        if (EVP_DigestUpdate(ctx, data, len) != 1) throw std::runtime_error("sha256 update failed");
    }

    std::string hex() {
        unsigned char out[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx, out, &len) != 1) throw std::runtime_error("sha256 final failed");
        static const char* digits = "0123456789abcdef";
        std::string hex;
        hex.reserve(len * 2);
        for (unsigned int i = 0; i < len; ++i) {
            hex.push_back(digits[out[i] >> 4]);
            hex.push_back(digits[out[i] & 0xf]);
        }
        return hex;
    }
};

} // namespace

std::string sha256_hex(std::string_view bytes) {
    DigestContext d;
    d.update(bytes.data(), bytes.size());
    return d.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open file for hashing: " + path.string());
    DigestContext d;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        std::streamsize got = in.gcount();
        if (got > 0) d.update(buf, static_cast<std::size_t>(got));
    }
    return d.hex();
}

} // namespace reval
