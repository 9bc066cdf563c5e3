#include "rppgm/util/format.hpp"
#include "rppgm/util/parallel.hpp"
#include "rppgm/util/rng.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "rppgm/util/error.hpp"

namespace rppgm {

std::string Rng::serialize() const {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << engine_;
    return os.str();
}

Rng Rng::deserialize(const std::string& state) {
    Rng rng;
    std::istringstream is(state);
    is.imbue(std::locale::classic());
    is >> rng.engine_;
    if (is.fail()) throw Error("rng state: malformed serialized engine");
    return rng;
}

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

std::string csv_row(std::span<const std::string> fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += fields[i];
    }
    out += '\n';
    return out;
}

namespace {
std::atomic<std::size_t> worker_override{0};
}

void set_worker_count(std::size_t n) { worker_override = n; }

std::size_t worker_count() {
    if (const std::size_t o = worker_override.load()) return o;
    const char* env = std::getenv("RPPGM_THREADS");
    if (!env) return 1;
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || v < 1) return 1;
    return static_cast<std::size_t>(v);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace rppgm
