#pragma once

#include <functional>
#include <string>

namespace svb::verify {

/// One line per check: "ok  <name>" / "FAIL <name>: <detail>".
using Report = std::function<void(bool ok, const std::string& name, const std::string& detail)>;

Report stdout_report();

bool run_svd_suite(const Report& report, int instances = 200, std::uint64_t seed = 7);
bool run_lemma1_suite(const Report& report, int instances = 200, std::uint64_t seed = 11);
bool run_gradcheck_suite(const Report& report, int instances = 20, std::uint64_t seed = 13);
bool run_dynamics_suite(const Report& report, int instances = 50, std::uint64_t seed = 17);

/// Dispatch by suite name; InputError on unknown names.
bool run_suite(const std::string& name, const Report& report);

}  // namespace svb::verify
