#pragma once

#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <json.hpp>

namespace metamem {

// Diagnostic warning, stderr only. Run artifacts (checkpoints, reports,
// run logs) never receive wall-clock or diagnostic noise, which keeps
// seeded runs byte-comparable.
inline void warn(const std::string& msg) {
    std::cerr << "[warn] " << msg << "\n";
}

// Append-only JSON-lines run log. Default-constructed logs are disabled
// and drop everything.
class RunLog {
public:
    RunLog() = default;

    explicit RunLog(const std::string& path)
        : out_(std::make_shared<std::ofstream>(path, std::ios::trunc)) {
        if (!*out_) {
            throw std::runtime_error("cannot open run log: " + path);
        }
    }

    bool enabled() const { return static_cast<bool>(out_); }

    void line(const nlohmann::json& j) {
        if (!out_) return;
        *out_ << j.dump() << "\n";
        out_->flush();
    }

private:
    std::shared_ptr<std::ofstream> out_;
};

} // namespace metamem
