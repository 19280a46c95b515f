#include <doctest.h>

#include "crysi/checks.hpp"

using namespace crysi;

TEST_SUITE("checks") {
  TEST_CASE("the invariant suite passes on a fresh build") {
    for (const auto& r : run_checks()) {
      CAPTURE(format_result(r));
      CHECK(r.pass);
    }
  }

  TEST_CASE("a corrupted cosine schedule fails the schedule check by name") {
    CheckOptions opt;
    opt.corrupt_vp_cos = true;
    const auto results = run_checks(opt);
    for (const auto& r : results) {
      CAPTURE(format_result(r));
      if (r.criterion == 3) {
        CHECK_FALSE(r.pass);
        CHECK(format_result(r).find("vp-schedule") != std::string::npos);
      } else {
        CHECK(r.pass);
      }
    }
  }

  TEST_CASE("result lines") {
    const CheckResult r{4, "periodic-geodesic", true, "ok", 0.5};
    CHECK(format_result(r) == "criterion 4 [periodic-geodesic]: PASS | ok (0.5 s)");
  }
}
