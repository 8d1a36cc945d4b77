#include <cstdio>

#include "nearcol/nearcol.hpp"

int main(int argc, char** argv) {
    (void)argc;
    (void)argv;
    std::puts("nearcol: subcommands not wired up yet");
    return 0;
}
