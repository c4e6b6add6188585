#include <doctest.h>

TEST_CASE("placeholder test_detection") { CHECK(true); }
