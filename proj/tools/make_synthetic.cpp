// Writes the bundled synthetic train/test datasets.

#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "itr/corpus.hpp"
#include "itr/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic three-class book-description corpus"};
  std::string out = "synthetic.tsv";
  itr::SyntheticConfig cfg;
  app.add_option("--out", out, "TSV to write");
  app.add_option("--docs", cfg.n_docs, "Number of documents");
  app.add_option("--seed", cfg.seed, "Seed");
  app.add_option("--label-noise", cfg.label_noise, "Fraction of randomly relabeled documents");
  app.add_option("--id-prefix", cfg.id_prefix, "Document id prefix");
  CLI11_PARSE(app, argc, argv);

  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) {
    std::cerr << "cannot write " << out << '\n';
    return 3;
  }
  itr::write_tsv(f, itr::make_synthetic_corpus(cfg));
  std::cout << "wrote " << cfg.n_docs << " documents to " << out << '\n';
  return 0;
}
