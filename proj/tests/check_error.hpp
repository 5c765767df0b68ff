#pragma once

#include <optional>
#include <string>

#include <doctest.h>

#include "ktcareer/error.hpp"

namespace testutil {

struct Caught {
  std::optional<ktc::ErrorKind> kind;
  std::string what;
};

template <class F>
Caught catch_error(F&& f) {
  try {
    f();
  } catch (const ktc::Error& e) {
    return {e.kind(), e.what()};
  } catch (const std::exception& e) {
    return {std::nullopt, std::string("foreign exception: ") + e.what()};
  }
  return {std::nullopt, "nothing thrown"};
}

inline bool kind_is(const Caught& c, ktc::ErrorKind k) { return c.kind && *c.kind == k; }

}  // namespace testutil

#define CHECK_ERROR(kind, ...)                                                   \
  do {                                                                           \
    const auto caught_ = ::testutil::catch_error([&] { (void)(__VA_ARGS__); }); \
    INFO(caught_.what);                                                          \
    CHECK(::testutil::kind_is(caught_, ::ktc::ErrorKind::kind));                 \
  } while (0)

#define CHECK_ERROR_MSG(kind, text, ...)                                         \
  do {                                                                           \
    const auto caught_ = ::testutil::catch_error([&] { (void)(__VA_ARGS__); }); \
    INFO(caught_.what);                                                          \
    CHECK(::testutil::kind_is(caught_, ::ktc::ErrorKind::kind));                 \
    CHECK(caught_.what.find(text) != std::string::npos);                         \
  } while (0)
