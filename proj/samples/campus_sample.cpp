// Runs the 19-photo campus scenario through an in-memory platform and prints
// the report. Pass a scenario file to use another one.

#include <iostream>

#include "photoreport/simulator.hpp"

using namespace photoreport;

int main(int argc, char** argv) {
  const std::string path = argc > 1 ? argv[1] : SAMPLES_DIR "/campus19.json";
  const auto registry = ClassRegistry::standard();
  const auto model = ClassifierModel::axis_aligned(registry);

  const auto spec = decode_scenario(read_json_file(path), registry);
  const auto stream = generate(spec, model, registry);
  const auto metrics = evaluate(spec, stream, model, registry);

  std::cout << metrics.table();
  std::cout << "groups:\n";
  for (const auto& group : metrics.partition) {
    std::cout << " ";
    for (const auto& id : group) std::cout << " " << id;
    std::cout << "\n";
  }
  return 0;
}
