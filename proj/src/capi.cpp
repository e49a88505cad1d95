// placeholder
#include "rdcx/ogposet.hpp"
