#include <cstdio>

int main() {
  std::puts("neuvis: command-line interface not wired up yet");
  return 0;
}
