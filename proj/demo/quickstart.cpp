// Generate a toy snapshot, lay it out, move one neuron and print what changed.
// Pass a path to also write the final layout.v1 document there.

#include <fstream>
#include <iostream>

#include "cnnvis/fixture.hpp"
#include "cnnvis/layout.hpp"

using namespace cnnvis;

namespace {

void summary(const NetworkSnapshot& s, const LayoutDocument& doc) {
  for (const auto& col : doc.columns) {
    std::cout << "  " << s.layers()[col.layer].name << ": " << s.layer_size(col.layer) << " neurons in "
              << col.clustering.clusters().size() << " clusters, order";
    for (auto id : col.order) std::cout << ' ' << id;
    std::cout << '\n';
  }
  for (std::size_t g = 0; g < doc.gaps.size(); ++g)
    std::cout << "  gap " << g << ": " << doc.gaps[g].connections.size() << " cluster edges, "
              << doc.gaps[g].bundles.biclusters.size() << " bundles\n";
}

}  // namespace

int main(int argc, char** argv) {
  fixture::FixtureSpec spec;
  spec.seed = 7;
  spec.emit.id = "demo";
  const auto fx = fixture::generate(spec);
  const auto& s = fx.snapshot;

  auto doc = assemble(s, {}, {});
  std::cout << "initial layout\n";
  summary(s, doc);

  // pull the first member of the largest first-column cluster into a cluster of its own
  const auto& col = doc.columns.front();
  const NeuronCluster* big = &col.clustering.clusters().front();
  for (const auto& c : col.clustering.clusters())
    if (c.members.size() > big->members.size()) big = &c;
  const auto who = s.neuron_id(big->members.front());
  doc = apply_interaction(s, doc, MoveNeuron{who, std::nullopt});
  std::cout << "after moving " << who << " into a new cluster\n";
  summary(s, doc);

  if (argc > 1) {
    std::ofstream(argv[1]) << serialize_layout(s, doc) << '\n';
    std::cout << "wrote " << argv[1] << '\n';
  }
}
