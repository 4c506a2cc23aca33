#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace bayesmap {

using Index = std::ptrdiff_t;
using Vec3 = Eigen::Vector3d;
using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when input data violates a documented precondition.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Raised when a file cannot be parsed or has the wrong layout.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Raised by the numerical kernels (eigen-solver, assignment) on failure.
class NumericalError : public Error {
public:
    using Error::Error;
};

namespace detail {
inline std::atomic<int>& thread_setting()
{
    static std::atomic<int> threads{0};
    return threads;
}
} // namespace detail

/// Number of worker threads used by the parallel kernels. Zero means
/// std::thread::hardware_concurrency().
inline void set_thread_count(int threads) { detail::thread_setting() = std::max(0, threads); }

inline int thread_count()
{
    int t = detail::thread_setting();
    if (t > 0)
        return t;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs fn(i) for i in [begin, end) on a pool of workers. Work items are
/// handed out in order, so results written by index are deterministic.
template <typename Fn>
void parallel_for(Index begin, Index end, Fn&& fn, int threads = 0)
{
    if (end <= begin)
        return;
    int workers = threads > 0 ? threads : thread_count();
    workers = static_cast<int>(std::min<Index>(workers, end - begin));
    if (workers <= 1) {
        for (Index i = begin; i < end; ++i)
            fn(i);
        return;
    }
    std::atomic<Index> next{begin};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    auto body = [&] {
        for (;;) {
            Index i = next.fetch_add(1);
            if (i >= end || failed)
                return;
            try {
                fn(i);
            } catch (...) {
                if (!failed.exchange(true))
                    failure = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (int w = 1; w < workers; ++w)
        pool.emplace_back(body);
    body();
    for (auto& t : pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

// Little-endian binary helpers for the cache formats.
namespace io {

static_assert(sizeof(double) == 8 && sizeof(float) == 4);

template <typename T>
void write_pod(std::ostream& os, const T& value)
{
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is)
{
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is)
        throw ParseError("unexpected end of binary stream");
    return value;
}

inline void write_magic(std::ostream& os, std::string_view magic) { os.write(magic.data(), 4); }

inline bool read_magic(std::istream& is, std::string_view magic)
{
    char buf[4];
    is.read(buf, 4);
    return is && std::memcmp(buf, magic.data(), 4) == 0;
}

template <typename T>
void write_array(std::ostream& os, const T* data, std::size_t count)
{
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
}

template <typename T>
void read_array(std::istream& is, T* data, std::size_t count)
{
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * sizeof(T)));
    if (!is)
        throw ParseError("unexpected end of binary stream");
}

} // namespace io

/// 64-bit FNV-1a, used for cache keys and config provenance.
class Fnv1a {
public:
    void update(const void* data, std::size_t bytes)
    {
        auto p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < bytes; ++i) {
            state_ ^= p[i];
            state_ *= 1099511628211ULL;
        }
    }
    void update(std::string_view s) { update(s.data(), s.size()); }
    template <typename T>
    void update_pod(const T& v)
    {
        update(&v, sizeof(T));
    }
    std::uint64_t digest() const { return state_; }
    std::string hex() const
    {
        static const char* digits = "0123456789abcdef";
        std::string out(16, '0');
        std::uint64_t v = state_;
        for (int i = 15; i >= 0; --i) {
            out[static_cast<std::size_t>(i)] = digits[v & 0xF];
            v >>= 4;
        }
        return out;
    }

private:
    std::uint64_t state_ = 14695981039346656037ULL;
};

} // namespace bayesmap
