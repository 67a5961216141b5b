#include <catch2/catch_amalgamated.hpp>

#include "adloco/selftest.hpp"

#include <set>
#include <string>

using adloco::selftest::CheckResult;

TEST_CASE("every built-in oracle check passes", "[selftest]") {
  const std::vector<CheckResult> results = adloco::selftest::run_all();
  REQUIRE(results.size() == 10);

  std::set<std::string> names;
  for (const CheckResult& r : results) {
    INFO(r.name << ": " << r.detail);
    CHECK(r.pass);
    names.insert(r.name);
  }
  REQUIRE(names.size() == results.size());  // names are distinct
}
