int values[8] = {3, 1, 4, 1, 5, 9, 2, 6};

int sum(int *v, int n) {
  int s = 0;
  for (int i = 0; i < n; i++) s += v[i];
  return s;
}

int main(void) {
  values[0] = sum(values, 8);
  return values[0];
}
