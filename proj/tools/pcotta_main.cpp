#include <cstdio>
int main() { std::puts("pcotta"); return 0; }
