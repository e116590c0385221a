// placeholder so the target exists while unit tests are wired up
int main() { return 1; }
