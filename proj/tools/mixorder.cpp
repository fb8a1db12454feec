#include <cstdio>

int main() {
  std::puts("mixorder: not yet wired");
  return 1;
}
