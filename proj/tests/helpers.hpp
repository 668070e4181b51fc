#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

// Scoped temporary directory for file-format tests.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        std::string tmpl =
            (std::filesystem::temp_directory_path() / "ihc_test_XXXXXX").string();
        if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
        path = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path / name).string(); }
};
