// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "suites.hpp"

TEST(Suites32, InvertibilityIn32Bit) {
  const auto checks = suite::invertibility_suite(1e-4);
  for (const auto& c : checks) EXPECT_TRUE(c.ok()) << c.name << ": " << c.value;
}
