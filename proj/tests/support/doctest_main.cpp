#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

// Only binaries that do not define their own main pick this one up.
int main(int argc, char** argv) { return doctest::Context(argc, argv).run(); }
