package org.example.dfs.namenode;

import org.example.dfs.Block;
import org.slf4j.Logger;
import org.slf4j.LoggerFactory;

public class BlockManager {
    private static final Logger LOG = LoggerFactory.getLogger(BlockManager.class);

    private int replication = 3;

    public void addStoredBlock(Block block, String node, boolean isNew) {
        if (node == null) {
            LOG.info("BLOCK* addStoredBlock: " + block + " on unknown node");
            return;
        }
        if (isNew) {
            LOG.info("BLOCK* addStoredBlock: blockMap updated: " + node + " is added to " + block + " size " + block.getNumBytes());
        } else {
            LOG.info("BLOCK* addStoredBlock: Redundant addStoredBlock request received for " + block + " on " + node);
        }
    }

    public void invalidate(Block block, String node) {
        LOG.info("BLOCK* invalidate: " + block + " on " + node);
    }

    public int getReplication() {
        return replication;
    }
}
