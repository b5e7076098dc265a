#pragma once

// Omniglot download helper. Kept out of the main headers so only the CLI and
// its tests pay the httplib/OpenSSL compile cost.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "anml/omniglot.hpp"
#include "anml/zipfile.hpp"

namespace anml {

inline constexpr const char* kDefaultOmniglotBaseUrl =
    "https://raw.githubusercontent.com/brendenlake/omniglot/master/python";

struct FetchOptions {
    std::string base_url = kDefaultOmniglotBaseUrl;
    bool offline = false;
    int64_t expected_classes = 1623;
};

struct FetchReport {
    bool already_present = false;
    size_t files_extracted = 0;
    int64_t classes_found = 0;
};

namespace detail {

inline std::vector<unsigned char> fetch_url_bytes(const std::string& url) {
    if (url.rfind("file://", 0) == 0) {
        std::ifstream f(url.substr(7), std::ios::binary);
        if (!f) throw DataError("cannot open " + url);
        return std::vector<unsigned char>((std::istreambuf_iterator<char>(f)),
                                          std::istreambuf_iterator<char>());
    }
    bool https = false;
    std::string rest;
    if (url.rfind("https://", 0) == 0) {
        https = true;
        rest = url.substr(8);
    } else if (url.rfind("http://", 0) == 0) {
        rest = url.substr(7);
    } else {
        throw DataError("unsupported url scheme: " + url);
    }
    const auto slash = rest.find('/');
    const std::string host = slash == std::string::npos ? rest : rest.substr(0, slash);
    const std::string path = slash == std::string::npos ? "/" : rest.substr(slash);

    auto check = [&url](const httplib::Result& res) {
        if (!res) throw DataError("request failed for " + url);
        if (res->status != 200)
            throw DataError("HTTP " + std::to_string(res->status) + " for " + url);
    };
    if (https) {
        httplib::SSLClient client(host);
        client.set_follow_location(true);
        client.set_read_timeout(120, 0);
        auto res = client.Get(path);
        check(res);
        return std::vector<unsigned char>(res->body.begin(), res->body.end());
    }
    httplib::Client client(host);
    client.set_follow_location(true);
    client.set_read_timeout(120, 0);
    auto res = client.Get(path);
    check(res);
    return std::vector<unsigned char>(res->body.begin(), res->body.end());
}

}  // namespace detail

inline int64_t count_omniglot_classes(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root)) return 0;
    return static_cast<int64_t>(enumerate_omniglot_classes(root).size());
}

// Downloads and unpacks the two standard archives unless a valid tree is
// already present. Offline mode only validates.
inline FetchReport fetch_omniglot(const std::filesystem::path& root, const FetchOptions& opts) {
    FetchReport report;
    report.classes_found = count_omniglot_classes(root);
    if (report.classes_found == opts.expected_classes) {
        report.already_present = true;
        return report;
    }
    if (opts.offline)
        throw DataError("offline mode: " + root.string() + " holds " +
                        std::to_string(report.classes_found) + " classes, expected " +
                        std::to_string(opts.expected_classes));

    std::filesystem::create_directories(root / "_archives");
    for (const char* archive : {"images_background.zip", "images_evaluation.zip"}) {
        const std::string url = opts.base_url + "/" + archive;
        const std::filesystem::path zip_path = root / "_archives" / archive;
        if (!std::filesystem::exists(zip_path)) {
            auto bytes = detail::fetch_url_bytes(url);
            std::ofstream f(zip_path, std::ios::binary | std::ios::trunc);
            if (!f) throw IoError("cannot write " + zip_path.string());
            f.write(reinterpret_cast<const char*>(bytes.data()),
                    static_cast<std::streamsize>(bytes.size()));
        }
        // Archives wrap content in images_background/ or images_evaluation/.
        report.files_extracted += extract_zip(zip_path, root, /*strip_first_component=*/true);
    }
    report.classes_found = count_omniglot_classes(root);
    if (report.classes_found != opts.expected_classes)
        throw DataError("after fetch, " + root.string() + " holds " +
                        std::to_string(report.classes_found) + " classes, expected " +
                        std::to_string(opts.expected_classes));
    return report;
}

}  // namespace anml
