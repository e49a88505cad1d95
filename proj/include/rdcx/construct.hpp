#pragma once

#include "rdcx/ogposet.hpp"

namespace rdcx {

// Gray product of carriers. Element (x, y) has dimension dim x + dim y and
// faces  d^a(x,y) = d^a x * {y}  u  {x} * d^((-)^dim x a) y.
struct GrayResult {
    PosetPtr poset;
    // flattened pair labels: pairs[d][i] = (x, y)
    std::vector<std::vector<std::pair<ElemRef, ElemRef>>> pairs;
    ElemRef pair_of(ElemRef x, ElemRef y) const;
};
GrayResult gray(PosetPtr p, PosetPtr q);

// Componentwise Gray of morphisms. dir_comap = false: both local embeddings
// (covariant); dir_comap = true: both comaps (underlying subdivisions).
// Collapses are rejected.
GradedFunction gray_map(const GradedFunction& f, const GradedFunction& g, bool dir_comap);

struct JoinResult {
    PosetPtr poset;
    // origin of each element: kind 0 = inl x, 1 = inr y, 2 = x * y
    struct Origin { int kind; ElemRef x, y; };
    std::vector<std::vector<Origin>> origins;
};
JoinResult join(PosetPtr p, PosetPtr q);

struct CylinderSpec {
    PosetPtr base;
    Subset k;  // closed subset of base
};

struct CylinderResult {
    PosetPtr poset;          // arr (x)_K base
    GradedFunction tau;      // projection onto the base
    // labels: (x) for x in K, (i, x) otherwise with i in {0-, 1, 0+} as 0, 1, 2
    struct Label { int i; ElemRef x; };  // i: -1 = collapsed "(x)", else 0:0^-, 1:"1", 2:0^+
    std::vector<std::vector<Label>> labels;
    ElemRef of(int i, ElemRef x) const;
};
CylinderResult partial_cylinder(const CylinderSpec& spec);

// Generating collapse tau_K : arr (x)_K U ->> U for an atom U and closed
// K inside the boundary of U.
CylinderResult generating_collapse(PosetPtr atom_base, const Subset& k);

struct PushoutResult {
    PosetPtr poset;
    GradedFunction left;   // P  -> poset
    GradedFunction right;  // P' -> poset
};
// Pushout of embeddings iota: U -> P, iota2: U -> P'.
PushoutResult pushout_embedding(const GradedFunction& iota, const GradedFunction& iota2);

struct ComergerPushout {
    PosetPtr poset;          // P[V/x]_s
    GradedFunction t_bar;    // comap poset -> P  (the subdivision t: P ~> poset)
    GradedFunction incl_v;   // embedding V -> poset
};
// Pushout of the subdivision s (given by its comap s_bar: V -> cl{x}) along
// the embedding of the atom cl{x} into P.
ComergerPushout pushout_comerger(const GradedFunction& iota, const GradedFunction& s_bar);

// Shared internal form: substitution along a subdivision of any closed U <= P.
ComergerPushout substitute_along_subdivision(const GradedFunction& iota,
                                             const GradedFunction& s_bar);

}  // namespace rdcx
