#pragma once

#include "rdcx/ogposet.hpp"

namespace rdcx {

struct MoleculeCert;
using CertPtr = std::shared_ptr<const MoleculeCert>;

// Constructive witness that a carrier is a molecule. Every node stores the
// carrier it certifies and the gluing embeddings of its children.
struct MoleculeCert {
    enum class Kind { point, paste, atom };
    Kind kind = Kind::point;
    PosetPtr carrier;
    CertPtr left, right;
    int k = -1;                       // paste dimension
    GradedFunction emb_left, emb_right;  // child carriers -> carrier

    json to_json() const;
    // Rebuilds carriers bottom-up and re-verifies every clause.
    static CertPtr from_json(const json& j);
};

CertPtr point();
CertPtr globe(int n);
CertPtr arrow();

// Pasting along the full k-boundary; k = -1 means min(dim U, dim V) - 1.
CertPtr paste(const CertPtr& u, const CertPtr& v, int k = -1);

// Pasting of V onto U at a submolecule iota: bd_k^-(V) -> U landing in
// bd_k^+(U) (when over == false the dual form, iota: bd_k^+(V) -> U in
// bd_k^-(U), pastes V below U). iota maps the extracted boundary of V into
// U's carrier.
CertPtr paste_at(const CertPtr& u, const CertPtr& v, int k, const GradedFunction& iota,
                 bool over = true);

CertPtr atom(const CertPtr& u, const CertPtr& v);

std::optional<CertPtr> recognize_molecule(PosetPtr p);
bool is_molecule(PosetPtr p);
bool is_atom_poset(PosetPtr p);

// mrg U = bd^- U => bd^+ U, with the projection comap stored separately
// (see morphism.hpp: co_merger).
CertPtr merger(const CertPtr& u);
CertPtr merger_of(PosetPtr round_molecule);

struct SubmolWitness {
    // Chain of clauses realizing the inclusion, innermost first. Each step is
    // either "iso", "factor" (pasting factor of a recorded binary split), or
    // "boundary" (inclusion of bd_k^a).
    struct Step {
        std::string clause;  // "iso" | "factor" | "boundary"
        int k = -1;
        Sign side = Sign::minus;
    };
    std::vector<Step> steps;
    GradedFunction inclusion;  // replayed embedding V -> U
};

// iota: an embedding of molecule carriers V -> U.
std::optional<SubmolWitness> is_submolecule(const GradedFunction& iota);

// Substitution of W for the rewritable submolecule iota(V) of U.
CertPtr substitute(const CertPtr& u, const GradedFunction& iota, const CertPtr& v_cert,
                   const CertPtr& w);

struct Layering {
    int k = 0;
    std::vector<Subset> parts;      // subsets of the carrier of U, in order
    std::vector<CertPtr> part_certs;  // standalone certified carriers
};

std::vector<Layering> layerings(const CertPtr& u, int k);

// All binary splits U = A o_k B with both sides containing a maximal element
// of dimension > k; returned as (A, B) subset pairs.
std::vector<std::pair<Subset, Subset>> binary_splits(PosetPtr p, int k);

// Enumeration of all molecules / atoms with at most max_elems elements and
// dimension at most max_dim, up to isomorphism (deterministic order).
struct Atlas {
    std::vector<CertPtr> molecules;  // canonical carriers
    std::vector<CertPtr> atoms() const;
    std::vector<CertPtr> rounds() const;
};
Atlas enumerate_molecules(int max_elems, int max_dim);

}  // namespace rdcx
