#include <cstdio>
int main(){ std::puts("timecast"); return 0; }
